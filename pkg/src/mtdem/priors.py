"""Score priors pluggable into the EM update, plus weight-file persistence.

A prior is anything with ``score(x) -> same-shape vector`` evaluated at a
flattened image.  Three implementations: the zero score (uninformative,
reproduces the prior-free baseline), the analytic unit-covariance Gaussian
score -(x - mean), and a trained network.  Time-conditioned networks are
evaluated at a small fixed time (default 0.01) since the EM update queries
the score at the data itself, not along the diffusion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scorenet import MlpScoreNet, forward

DEFAULT_EVAL_TIME = 0.01

WEIGHTS_FORMAT = "mtdem-scorenet-v1"


class ZeroScore:
    """Uninformative prior: score is identically zero."""

    def score(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass
class GaussianScore:
    """Score of N(mean, I): -(x - mean)."""

    mean: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()

    def score(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.size:
            raise ValueError(f"length {x.shape[-1]} != mean length {self.mean.size}")
        return -(x - self.mean)


@dataclass
class NetScore:
    """A trained score network; conditioned nets are queried at t_eval."""

    net: MlpScoreNet
    t_eval: float = DEFAULT_EVAL_TIME

    def score(self, x: np.ndarray) -> np.ndarray:
        if self.net.time_conditioned:
            return forward(self.net, x, self.t_eval)
        return forward(self.net, x)


def score_at_data(prior, x: np.ndarray) -> np.ndarray:
    """Evaluate a prior's score at a data point (uniform entry point used
    by the EM update)."""
    return prior.score(np.asarray(x, dtype=np.float64))


def save_weights(net: MlpScoreNet, path) -> None:
    """Persist a network as a self-describing JSON document: layer dims,
    activation tag, time-conditioning flag, and row-major full-precision
    weight arrays."""
    doc = {
        "format": WEIGHTS_FORMAT,
        "layer_dims": list(net.layer_dims),
        "activation": "softplus",
        "time_conditioned": bool(net.time_conditioned),
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_weights(path) -> MlpScoreNet:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"not a {WEIGHTS_FORMAT} weight file: {path}")
    if doc.get("activation") != "softplus":
        raise ValueError(f"unsupported activation {doc.get('activation')!r}")
    weights = [np.asarray(layer["weights"], dtype=np.float64) for layer in doc["layers"]]
    biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    net = MlpScoreNet(
        layer_dims=[int(d) for d in doc["layer_dims"]],
        time_conditioned=bool(doc["time_conditioned"]),
        weights=weights,
        biases=biases,
    )
    expected = net.layer_dims[1:]
    got = [w.shape[0] for w in net.weights]
    if expected != got:
        raise ValueError(f"layer dims {expected} do not match weight shapes {got}")
    return net
