"""Command-line surface: synth, train-prior, reconstruct, sweep.

Every command reads optional defaults from a JSON config file and lets
flags override them.  Output files are byte-reproducible given identical
inputs and seeds; wall-clock columns default to zero in persisted CSVs
(pass --timing wall to keep them).

Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import load_config, merged
from .datasets import gaussian_mean, gaussian_samples
from .emsolver import EmConfig, GammaSchedule, SolverAbortError, run
from .gridfile import load_measurement, read_grid, save_measurement, write_grid
from .metrics import relative_error
from .priors import (
    DEFAULT_EVAL_TIME,
    GaussianScore,
    NetScore,
    ZeroScore,
    load_weights,
    save_weights,
)
from .scorenet import init_mlp
from .sde import VpSchedule
from .sweep import (
    METHOD_WITH_PRIOR,
    SweepPlan,
    run_sweep,
    summarize,
    write_rows_csv,
    write_summary_csv,
)
from .synth import MeasurementSpec, PlacementError, synthesize
from .training import TrainConfig, TrainingDivergedError, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class UsageError(ValueError):
    pass


def _float_or_none(text):
    return None if text is None else float(text)


def parse_prior(spec: str, t_eval: float = DEFAULT_EVAL_TIME):
    """Prior selector: "none", "gaussian:<mean grid>", or "net:<weights>"."""
    if spec == "none":
        return ZeroScore()
    if spec.startswith("gaussian:"):
        mean, _ = read_grid(spec.split(":", 1)[1])
        return GaussianScore(mean.ravel())
    if spec.startswith("net:"):
        return NetScore(load_weights(spec.split(":", 1)[1]), t_eval=t_eval)
    raise UsageError(
        f"unknown prior {spec!r}; expected none, gaussian:<mean-file>, or net:<weights>"
    )


def _parse_fft(text):
    if text in (None, "auto"):
        return None
    if text == "on":
        return True
    if text == "off":
        return False
    raise UsageError(f"--fft must be auto, on, or off (got {text!r})")


def _add_config_flag(p):
    p.add_argument("--config", help="JSON config file supplying defaults")


def _add_em_flags(p):
    p.add_argument("--max-iters", type=int, help="EM iteration cap (default 100)")
    p.add_argument("--inner-steps", type=int, help="gradient ascent steps per iteration (default 1)")
    p.add_argument("--learning-rate", type=float, help="ascent step size (default 1e-3)")
    p.add_argument("--stop-eps", type=float, help="stop when the update norm drops below this (default 1e-5)")
    p.add_argument("--gamma", help='prior weight schedule: number, "constant:<c>", or "linear" (default constant 1)')
    p.add_argument("--init", help='"uniform01" or a grid file holding the initial estimate')
    p.add_argument("--em-seed", type=int, dest="em_seed", help="seed for the uniform initial estimate (default 0)")
    p.add_argument("--sigma-floor", type=float, help="effective noise floor for noiseless data (default 0.1)")
    p.add_argument("--fft", choices=["auto", "on", "off"], help="likelihood path (default auto)")
    p.add_argument("--t-eval", type=float, help="diffusion time at which net priors are queried (default 0.01)")


def _em_config_from(args, config) -> EmConfig:
    gamma_raw = merged(args.gamma, config, "em", "gamma", "constant:1.0")
    schedule = GammaSchedule.parse(str(gamma_raw))
    return EmConfig(
        max_iters=int(merged(args.max_iters, config, "em", "max_iters", 100)),
        inner_steps=int(merged(args.inner_steps, config, "em", "inner_steps", 1)),
        learning_rate=float(merged(args.learning_rate, config, "em", "learning_rate", 1e-3)),
        stop_eps=float(merged(args.stop_eps, config, "em", "stop_eps", 1e-5)),
        gamma=schedule,
        seed=int(merged(args.em_seed, config, "em", "seed", 0)),
        sigma_floor=float(merged(args.sigma_floor, config, "em", "sigma_floor", 0.1)),
        fast=_parse_fft(merged(args.fft, config, "em", "fft", "auto")),
    )


def _load_file_config(args) -> dict:
    return load_config(args.config) if getattr(args, "config", None) else {}


# ----------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    config = _load_file_config(args)
    target_path = merged(args.target, config, "synth", "target")
    out = merged(args.out, config, "synth", "out")
    if not target_path or not out:
        raise UsageError("synth needs --target and --out")
    target, _ = read_grid(target_path)
    L = target.shape[0]
    if target.shape[0] != target.shape[1]:
        raise UsageError(f"target must be square, got {target.shape}")
    want_l = merged(args.L, config, "synth", "L")
    if want_l is not None and int(want_l) != L:
        raise UsageError(f"--L {want_l} does not match target side {L}")
    spec = MeasurementSpec(
        N=int(merged(args.N, config, "synth", "N", 11 * L)),
        L=L,
        K=int(merged(args.K, config, "synth", "K", 4)),
        density=float(merged(args.density, config, "synth", "density", 0.1)),
        snr=_float_or_none(merged(args.snr, config, "synth", "snr")),
        sigma=_float_or_none(merged(args.sigma, config, "synth", "sigma")),
        seed=int(merged(args.seed, config, "synth", "seed", 0)),
        area=merged(args.area, config, "synth", "area"),
    )
    measurement = synthesize(spec, target)
    save_measurement(out, measurement)
    print(
        f"wrote {out}: N={spec.N} occurrences={len(measurement.truth)} "
        f"sigma={measurement.sigma!r}"
    )
    return EXIT_OK


# ----------------------------------------------------------- train-prior


def cmd_train_prior(args) -> int:
    config = _load_file_config(args)
    out = merged(args.out, config, "train", "out")
    if not out:
        raise UsageError("train-prior needs --out")
    seed = int(merged(args.seed, config, "train", "seed", 0))
    dataset_path = merged(args.dataset, config, "train", "dataset")
    mean_out = merged(args.mean_out, config, "train", "mean_out")

    seeds = np.random.SeedSequence(seed).spawn(4)
    if dataset_path:
        data, _ = read_grid(dataset_path)
        dim = data.shape[1]
    else:
        L = int(merged(args.L, config, "train", "L", 5))
        samples = int(merged(args.samples, config, "train", "samples", 10_000))
        mean = gaussian_mean(L, np.random.default_rng(seeds[0]))
        data = gaussian_samples(mean, samples, np.random.default_rng(seeds[1]))
        dim = L * L
        if mean_out:
            write_grid(mean_out, mean)
    hidden = int(merged(args.hidden, config, "train", "hidden", 128))
    time_conditioned = bool(
        merged(args.time_conditioned, config, "train", "time_conditioned", True)
    )
    if not time_conditioned:
        raise UsageError(
            "denoising training requires a time-conditioned net; "
            "drop --no-time-conditioned"
        )
    net = init_mlp([dim, hidden, hidden, dim], time_conditioned=True,
                   seed=int(seeds[2].generate_state(1)[0]))
    train_cfg = TrainConfig(
        batch_size=int(merged(args.batch_size, config, "train", "batch_size", 128)),
        steps=int(merged(args.steps, config, "train", "steps", 6000)),
        learning_rate=float(merged(args.learning_rate, config, "train", "learning_rate", 1e-3)),
        t_cutoff=float(merged(args.t_cutoff, config, "train", "t_cutoff", 1e-3)),
        weight_decay=float(merged(args.weight_decay, config, "train", "weight_decay", 0.1)),
        ema_decay=float(merged(args.ema_decay, config, "train", "ema_decay", 0.999)),
        seed=int(seeds[3].generate_state(1)[0]),
    )
    trained, history = train(net, data, VpSchedule(), train_cfg)
    save_weights(trained, out)
    history_path = merged(args.loss_history, config, "train", "loss_history")
    if history_path is None:
        history_path = str(Path(out).with_suffix(".loss.csv"))
    with open(history_path, "w") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(history):
            fh.write(f"{step},{loss!r}\n")
    final = history[-1] if history else float("nan")
    print(f"wrote {out}: {trained.n_params} parameters, final loss {final!r}")
    return EXIT_OK


# ------------------------------------------------------------ reconstruct


def cmd_reconstruct(args) -> int:
    config = _load_file_config(args)
    if not args.measurement or not args.out:
        raise UsageError("reconstruct needs --measurement and --out")
    measurement = load_measurement(args.measurement)
    em_config = _em_config_from(args, config)
    t_eval = float(merged(args.t_eval, config, "em", "t_eval", DEFAULT_EVAL_TIME))
    prior = parse_prior(args.prior or "none", t_eval=t_eval)

    init = merged(args.init, config, "em", "init", "uniform01")
    f0 = None
    if init != "uniform01":  # an initial-estimate grid file
        f0, _ = read_grid(init)
        em_config.init = "provided"

    estimate, state = run(measurement, f0, prior, em_config)
    write_grid(args.out, estimate, sidecar={
        "iterations": state.iteration,
        "final_delta": state.history[-1].delta if state.history else None,
        "gamma": em_config.gamma.spec_string(),
    })
    log_path = args.log or str(Path(args.out).with_suffix(".iters.csv"))
    timing = args.timing or "none"
    with open(log_path, "w") as fh:
        fh.write("iter,q_value,delta,gamma,seconds\n")
        for rec in state.history:
            secs = rec.seconds if timing == "wall" else 0.0
            fh.write(
                f"{rec.iteration},{rec.q_value!r},{rec.delta!r},{rec.gamma!r},{secs!r}\n"
            )
    print(f"wrote {args.out}: {state.iteration} iterations")
    if args.target:
        truth, _ = read_grid(args.target)
        err = relative_error(truth, estimate, measurement.spec.K)
        print(f"relative error (min over rotations): {err!r}")
    return EXIT_OK


# ------------------------------------------------------------------ sweep


def _sweep_targets(args, config) -> np.ndarray:
    paths = merged(args.targets, config, "sweep", "targets")
    gauss = config.get("sweep", {}).get("gaussian_targets")
    if args.gaussian_count is not None or args.gaussian_mean is not None:
        gauss = {
            "count": args.gaussian_count if args.gaussian_count is not None
            else (gauss or {}).get("count", 10),
            "mean": args.gaussian_mean if args.gaussian_mean is not None
            else (gauss or {}).get("mean"),
            "seed": args.gaussian_seed if args.gaussian_seed is not None
            else (gauss or {}).get("seed", 0),
        }
    if paths and gauss:
        raise UsageError("give either target files or gaussian targets, not both")
    if paths:
        if isinstance(paths, str):
            paths = [p for p in paths.split(",") if p]
        grids = [read_grid(p)[0] for p in paths]
        return np.stack(grids)
    if gauss:
        if not gauss.get("mean"):
            raise UsageError("gaussian targets need a mean grid file")
        mean, _ = read_grid(gauss["mean"])
        count = int(gauss.get("count", 10))
        seed = int(gauss.get("seed", 0))
        flat = gaussian_samples(mean, count, np.random.default_rng(seed))
        return flat.reshape(count, *mean.shape)
    raise UsageError("sweep needs targets (files or gaussian_targets)")


def cmd_sweep(args) -> int:
    config = load_config(args.plan) if args.plan else _load_file_config(args)
    out_dir = merged(args.out_dir, config, "sweep", "out_dir")
    if not out_dir:
        raise UsageError("sweep needs --out-dir")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    snrs_raw = merged(args.snrs, config, "sweep", "snrs")
    if isinstance(snrs_raw, str):
        snrs_raw = [s for s in snrs_raw.split(",") if s]
    if not snrs_raw:
        raise UsageError("sweep needs a non-empty SNR list")
    snrs = [float(s) for s in snrs_raw]

    methods_raw = merged(args.methods, config, "sweep", "methods")
    if methods_raw is None:
        methods = ("no-prior", "with-prior")
    elif isinstance(methods_raw, str):
        methods = tuple(m for m in methods_raw.split(",") if m)
    else:
        methods = tuple(methods_raw)

    targets = _sweep_targets(args, config)
    em_config = _em_config_from(args, config)
    t_eval = float(merged(args.t_eval, config, "em", "t_eval", DEFAULT_EVAL_TIME))

    priors = {}
    if METHOD_WITH_PRIOR in methods:
        prior_spec = merged(args.prior, config, "sweep", "prior")
        if not prior_spec:
            raise UsageError("with-prior method needs --prior")
        priors[METHOD_WITH_PRIOR] = parse_prior(prior_spec, t_eval=t_eval)

    sigma = merged(args.sigma, config, "sweep", "sigma")
    row_timeout = merged(args.row_timeout, config, "sweep", "row_timeout")
    plan = SweepPlan(
        snrs=snrs,
        targets=targets,
        trials=int(merged(args.trials, config, "sweep", "trials", 1)),
        methods=methods,
        tag=str(merged(args.tag, config, "sweep", "tag", "sweep")),
        N=merged(args.N, config, "sweep", "N"),
        K=int(merged(args.K, config, "sweep", "K", 4)),
        density=float(merged(args.density, config, "sweep", "density", 0.1)),
        area=merged(args.area, config, "sweep", "area"),
        sigma=None if sigma is None else float(sigma),
        init=str(merged(args.init, config, "sweep", "init", "uniform01")),
        row_timeout=None if row_timeout is None else float(row_timeout),
        master_seed=int(merged(args.master_seed, config, "sweep", "master_seed", 0)),
        em=em_config,
    )
    workers = merged(args.workers, config, "sweep", "workers")
    result = run_sweep(plan, priors, workers=None if workers is None else int(workers))

    timing = merged(args.timing, config, "sweep", "timing", "none")
    rows_path = out_dir / "rows.csv"
    summary_path = out_dir / "summary.csv"
    plot_path = out_dir / "plot.svg"
    write_rows_csv(result, rows_path, timing=timing)
    write_summary_csv(result, summary_path)
    from .plots import save_error_plot  # deferred: pulls in matplotlib

    save_error_plot(result, plot_path, title=plan.tag)
    failed = sum(1 for r in result.rows if np.isnan(r.error))
    print(f"wrote {rows_path}, {summary_path}, {plot_path}")
    print(f"{len(result.rows)} rows ({failed} failed)")
    for snr, method, mean, std, n in summarize(result):
        print(f"  snr={snr!r} {method}: mean={mean!r} std={std!r} n={n}")
    return EXIT_OK


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtdem",
        description="Multi-target detection: approximate EM with score-based priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a measurement with ground truth")
    p.add_argument("--target", help="target image grid file")
    p.add_argument("--out", help="output measurement grid file")
    p.add_argument("--N", type=int, help="measurement side (default 11 L)")
    p.add_argument("--L", type=int, help="expected target side (validation only)")
    p.add_argument("--K", type=int, help="rotation grid size (default 4)")
    p.add_argument("--density", type=float, help="target occupancy fraction (default 0.1)")
    p.add_argument("--snr", help="signal-to-noise ratio (exclusive with --sigma)")
    p.add_argument("--sigma", help="noise standard deviation (exclusive with --snr)")
    p.add_argument("--seed", type=int, help="synthesis seed (default 0)")
    p.add_argument("--area", type=int, help="override the pixel area in the SNR formula")
    _add_config_flag(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-prior", help="train a score network prior")
    p.add_argument("--out", help="output weight file (JSON)")
    p.add_argument("--dataset", help="training samples as a grid file (rows = samples)")
    p.add_argument("--L", type=int, help="image side for the gaussian generator (default 5)")
    p.add_argument("--samples", type=int, help="generator sample count (default 10000)")
    p.add_argument("--hidden", type=int, help="hidden width (default 128)")
    p.add_argument("--steps", type=int, help="training steps (default 4000)")
    p.add_argument("--batch-size", type=int, help="minibatch size (default 128)")
    p.add_argument("--learning-rate", type=float, help="optimizer step size (default 1e-3)")
    p.add_argument("--t-cutoff", type=float, help="lower diffusion-time cutoff (default 1e-3)")
    p.add_argument("--weight-decay", type=float, help="decoupled weight decay (default 0.1)")
    p.add_argument("--ema-decay", type=float, help="parameter averaging decay, 0 disables (default 0.999)")
    p.add_argument("--seed", type=int, help="master seed for data, init, and training (default 0)")
    p.add_argument("--mean-out", help="persist the generator mean as a grid file")
    p.add_argument("--loss-history", help="loss history CSV path (default <out>.loss.csv)")
    p.add_argument(
        "--time-conditioned",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="condition the net on diffusion time (default on)",
    )
    _add_config_flag(p)
    p.set_defaults(func=cmd_train_prior)

    p = sub.add_parser("reconstruct", help="run EM on a measurement")
    p.add_argument("--measurement", help="measurement grid file with sidecar")
    p.add_argument("--prior", help="none | gaussian:<mean-file> | net:<weights>")
    p.add_argument("--out", help="output estimate grid file")
    p.add_argument("--log", help="iteration CSV path (default <out>.iters.csv)")
    p.add_argument("--target", help="ground-truth grid file; prints the final error")
    p.add_argument("--timing", choices=["none", "wall"], help="seconds column content (default none)")
    _add_em_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="SNR sweep over methods, trials, and targets")
    p.add_argument("--plan", help="JSON plan file (same schema as --config)")
    p.add_argument("--out-dir", help="directory for rows.csv, summary.csv, plot.svg")
    p.add_argument("--snrs", help="comma-separated SNR list")
    p.add_argument("--trials", type=int, help="trials per cell (default 1)")
    p.add_argument("--methods", help="comma-separated subset of no-prior,with-prior")
    p.add_argument("--prior", help="prior for the with-prior method")
    p.add_argument("--targets", help="comma-separated target grid files")
    p.add_argument("--gaussian-count", type=int, help="number of gaussian-law targets")
    p.add_argument("--gaussian-mean", help="mean grid file for gaussian-law targets")
    p.add_argument("--gaussian-seed", type=int, help="seed for gaussian-law targets")
    p.add_argument("--tag", help="dataset tag for the plot title")
    p.add_argument("--N", type=int, help="measurement side (default 11 L)")
    p.add_argument("--K", type=int, help="rotation grid size (default 4)")
    p.add_argument("--density", type=float, help="target occupancy fraction (default 0.1)")
    p.add_argument("--area", type=int, help="override the pixel area in the SNR formula")
    p.add_argument("--sigma", help="fixed noise level overriding the SNR values")
    p.add_argument("--row-timeout", dest="row_timeout",
                   help="per-row wall cap in seconds, enforced with workers > 1")
    p.add_argument("--master-seed", type=int, help="master seed (default 0)")
    p.add_argument("--workers", type=int, help="parallel cell workers (default MTD_THREADS or 1)")
    p.add_argument("--timing", choices=["none", "wall"], help="seconds column content (default none)")
    _add_em_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PlacementError, SolverAbortError, TrainingDivergedError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
