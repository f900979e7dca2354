"""Run configuration files: JSON documents with one section per pipeline
stage, every field also reachable as a CLI flag.

Precedence is flag > config file > built-in default.  Unknown sections or
keys are rejected outright so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

ALLOWED_KEYS = {
    "synth": {
        "target", "out", "N", "L", "K", "density", "snr", "sigma", "seed", "area",
    },
    "train": {
        "out", "mean_out", "loss_history", "dataset", "L", "samples", "hidden",
        "time_conditioned", "steps", "batch_size", "learning_rate", "t_cutoff",
        "weight_decay", "ema_decay", "seed",
    },
    "em": {
        "max_iters", "inner_steps", "learning_rate", "stop_eps", "gamma",
        "init", "seed", "sigma_floor", "fft", "t_eval",
    },
    "sweep": {
        "tag", "snrs", "trials", "methods", "prior", "targets",
        "gaussian_targets", "N", "K", "density", "area", "sigma", "init",
        "row_timeout", "master_seed", "out_dir", "timing", "workers",
    },
}

GAUSSIAN_TARGET_KEYS = {"count", "mean", "seed"}


def load_config(path) -> dict:
    """Parse and validate a config document; returns {section: {key: value}}."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"config {path} must be a JSON object of sections")
    for section, body in doc.items():
        if section not in ALLOWED_KEYS:
            raise ValueError(
                f"unknown config section {section!r}; "
                f"expected one of {sorted(ALLOWED_KEYS)}"
            )
        if not isinstance(body, dict):
            raise ValueError(f"config section {section!r} must be an object")
        for key in body:
            if key not in ALLOWED_KEYS[section]:
                raise ValueError(
                    f"unknown key {key!r} in config section {section!r}"
                )
        if section == "sweep" and isinstance(body.get("gaussian_targets"), dict):
            for key in body["gaussian_targets"]:
                if key not in GAUSSIAN_TARGET_KEYS:
                    raise ValueError(
                        f"unknown key {key!r} in sweep.gaussian_targets"
                    )
    return doc


def merged(args_value, config: dict, section: str, key: str, default=None):
    """Resolve one setting with flag > config > default precedence; a flag
    left at None means "not given"."""
    if args_value is not None:
        return args_value
    body = config.get(section, {})
    if key in body:
        return body[key]
    return default
