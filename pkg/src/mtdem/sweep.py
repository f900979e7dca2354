"""SNR sweep harness: synthesize, reconstruct, and score over a grid of
(snr, method, trial, target) cells, with deterministic per-cell seeding.

Each cell derives its own seed from the master seed and its coordinates,
so changing one trial index changes only that row's randomness, and both
methods of a cell share the same measurement and the same initial
estimate.  Cells are independent jobs; with more than one worker they run
in a process pool and are reassembled in canonical order, so results do
not depend on the worker count.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeoutError
from dataclasses import dataclass, field, replace

import numpy as np

from .emsolver import EmConfig, run
from .metrics import relative_error
from .priors import ZeroScore
from .synth import MeasurementSpec, synthesize

METHOD_NO_PRIOR = "no-prior"
METHOD_WITH_PRIOR = "with-prior"
KNOWN_METHODS = (METHOD_NO_PRIOR, METHOD_WITH_PRIOR)

ROWS_HEADER = "snr,method,trial,target_id,error,iters,seconds"
SUMMARY_HEADER = "snr,method,mean,std,n"


@dataclass
class SweepPlan:
    """One experiment grid: SNRs x methods x trials x targets."""

    snrs: list[float]
    targets: np.ndarray  # (T, L, L) stack of target images
    trials: int = 1
    methods: tuple[str, ...] = KNOWN_METHODS
    tag: str = "sweep"
    N: int | None = None  # defaults to 11 L
    K: int = 4
    density: float = 0.1
    area: int | None = None
    sigma: float | None = None  # fixed noise level overriding the snr values
    init: str = "uniform01"  # or "near-truth": truth + 5% unit noise
    row_timeout: float | None = None  # per-row cap, enforced with workers > 1
    master_seed: int = 0
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim != 3 or self.targets.shape[1] != self.targets.shape[2]:
            raise ValueError("targets must be a (T, L, L) stack")
        if not self.snrs or any(s <= 0 for s in self.snrs):
            raise ValueError("snrs must be a non-empty list of positive values")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.init not in ("uniform01", "near-truth"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.N is None:
            self.N = 11 * self.L

    @property
    def L(self) -> int:
        return self.targets.shape[1]


@dataclass
class SweepRow:
    snr: float
    method: str
    trial: int
    target_id: int
    error: float  # nan flags a failed cell
    iters: int
    seconds: float


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def mean_error(self, snr: float, method: str) -> float:
        vals = [
            r.error
            for r in self.rows
            if r.snr == snr and r.method == method and not math.isnan(r.error)
        ]
        return float(np.mean(vals)) if vals else float("nan")


def cell_seed(master_seed: int, *coords: int) -> int:
    """A stable 64-bit seed derived from the master seed and coordinates."""
    ss = np.random.SeedSequence((master_seed, *coords))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_cell(args) -> list[SweepRow]:
    plan, priors, snr_idx, trial, target_id = args
    snr = plan.snrs[snr_idx]
    target = plan.targets[target_id]
    meas_seed = cell_seed(plan.master_seed, snr_idx, trial, target_id, 0)
    init_seed = cell_seed(plan.master_seed, snr_idx, trial, target_id, 1)
    spec = MeasurementSpec(
        N=plan.N, L=plan.L, K=plan.K, density=plan.density,
        snr=None if plan.sigma is not None else snr,
        sigma=plan.sigma, seed=meas_seed, area=plan.area,
    )
    f0 = None
    if plan.init == "near-truth":
        jitter = np.random.default_rng(init_seed).standard_normal(target.shape)
        f0 = target + 0.05 * jitter
    rows = []
    for method in plan.methods:
        config = replace(plan.em, seed=init_seed)
        try:
            measurement = synthesize(spec, target)
            _, state = run(measurement, f0, priors[method], config)
            err = relative_error(target, state.estimate, plan.K)
            secs = sum(r.seconds for r in state.history)
            rows.append(
                SweepRow(snr, method, trial, target_id, err, state.iteration, secs)
            )
        except Exception as exc:  # flagged, sweep continues
            print(
                f"sweep cell failed (snr={snr}, method={method}, trial={trial}, "
                f"target={target_id}): {exc}",
                file=sys.stderr,
            )
            rows.append(
                SweepRow(snr, method, trial, target_id, float("nan"), 0, 0.0)
            )
    return rows


def _timed_out_rows(plan: SweepPlan, job) -> list[SweepRow]:
    _, _, snr_idx, trial, target_id = job
    snr = plan.snrs[snr_idx]
    print(
        f"sweep cell timed out after {plan.row_timeout}s "
        f"(snr={snr}, trial={trial}, target={target_id})",
        file=sys.stderr,
    )
    return [
        SweepRow(snr, method, trial, target_id, float("nan"), 0, 0.0)
        for method in plan.methods
    ]


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else the MTD_THREADS environment
    variable (0 = one worker per core), else 1."""
    if workers is None:
        env = os.environ.get("MTD_THREADS", "1")
        try:
            workers = int(env)
        except ValueError as exc:
            raise ValueError(f"MTD_THREADS={env!r} is not an integer") from exc
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers < 0:
        raise ValueError("worker count must be >= 0")
    return workers


def run_sweep(plan: SweepPlan, priors: dict, workers: int | None = None) -> SweepResult:
    """Run every cell of the plan and return rows in canonical order
    (snr, method, trial, target); the no-prior method always maps to the
    zero score regardless of the supplied priors."""
    priors = dict(priors)
    priors.setdefault(METHOD_NO_PRIOR, ZeroScore())
    for method in plan.methods:
        if method not in priors:
            raise ValueError(f"no prior supplied for method {method!r}")

    jobs = [
        (plan, priors, snr_idx, trial, target_id)
        for snr_idx in range(len(plan.snrs))
        for trial in range(plan.trials)
        for target_id in range(len(plan.targets))
    ]
    n_workers = resolve_workers(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_run_cell, job) for job in jobs]
            per_cell = []
            for job, future in zip(jobs, futures):
                try:
                    per_cell.append(future.result(timeout=plan.row_timeout))
                except FuturesTimeoutError:
                    per_cell.append(_timed_out_rows(plan, job))
    else:
        if plan.row_timeout is not None:
            print(
                "sweep row_timeout needs workers > 1 to be enforced; ignoring",
                file=sys.stderr,
            )
        per_cell = [_run_cell(job) for job in jobs]

    by_key = {}
    for rows in per_cell:
        for row in rows:
            by_key[(row.snr, row.method, row.trial, row.target_id)] = row
    ordered = [
        by_key[(plan.snrs[snr_idx], method, trial, target_id)]
        for snr_idx in range(len(plan.snrs))
        for method in plan.methods
        for trial in range(plan.trials)
        for target_id in range(len(plan.targets))
    ]
    return SweepResult(rows=ordered)


def summarize(result: SweepResult) -> list[tuple[float, str, float, float, int]]:
    """Per (snr, method) mean and std of the error over all valid rows,
    preserving first-appearance order."""
    groups: dict[tuple[float, str], list[float]] = {}
    order = []
    for row in result.rows:
        key = (row.snr, row.method)
        if key not in groups:
            groups[key] = []
            order.append(key)
        if not math.isnan(row.error):
            groups[key].append(row.error)
    out = []
    for snr, method in order:
        vals = groups[(snr, method)]
        n = len(vals)
        mean = float(np.mean(vals)) if n else float("nan")
        std = float(np.std(vals, ddof=1)) if n > 1 else 0.0
        out.append((snr, method, mean, std, n))
    return out


def write_rows_csv(result: SweepResult, path, timing: str = "none") -> None:
    """Write the row table; ``timing="none"`` (default) zeroes the seconds
    column so reruns are byte-identical, ``timing="wall"`` keeps the
    measured values."""
    if timing not in ("none", "wall"):
        raise ValueError(f"unknown timing mode {timing!r}")
    lines = [ROWS_HEADER]
    for r in result.rows:
        secs = r.seconds if timing == "wall" else 0.0
        lines.append(
            f"{r.snr!r},{r.method},{r.trial},{r.target_id},{r.error!r},{r.iters},{secs!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_csv(result: SweepResult, path) -> None:
    lines = [SUMMARY_HEADER]
    for snr, method, mean, std, n in summarize(result):
        lines.append(f"{snr!r},{method},{mean!r},{std!r},{n}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
