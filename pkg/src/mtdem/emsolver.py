"""The outer EM loop: posterior refresh, regularized gradient ascent,
stopping rule, and per-iteration telemetry.

One iteration freezes the posterior at the current estimate, then takes a
fixed number of ascent steps

    F <- F + mu * (grad Q(F | frozen posterior) + gamma(tau) * score(F))

re-evaluating the Q-gradient at each inner iterate while the posterior
stays put.  The loop stops early once the Frobenius update norm drops
below the stopping threshold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .likelihood import PatchSet, e_step, partition, q_gradient
from .priors import score_at_data


class SolverAbortError(RuntimeError):
    """The iterate became non-finite; lower the learning rate."""


@dataclass(frozen=True)
class GammaSchedule:
    """Prior weight per iteration: a constant, or tau / max_iters ramping
    from 0 to 1 over the run."""

    kind: str = "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown gamma schedule {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "GammaSchedule":
        """Accepts "linear", "constant:<c>", or a bare number meaning a
        constant."""
        text = text.strip()
        if text == "linear":
            return cls("linear")
        if text.startswith("constant:"):
            return cls("constant", float(text.split(":", 1)[1]))
        return cls("constant", float(text))

    def spec_string(self) -> str:
        return "linear" if self.kind == "linear" else f"constant:{self.value!r}"


def gamma(schedule: GammaSchedule, tau: int, max_iters: int) -> float:
    if not 0 <= tau <= max_iters:
        raise ValueError(f"tau={tau} outside [0, {max_iters}]")
    if schedule.kind == "constant":
        return schedule.value
    return tau / max_iters


@dataclass
class EmConfig:
    max_iters: int = 100
    inner_steps: int = 1
    learning_rate: float = 1e-3
    stop_eps: float = 1e-5
    gamma: GammaSchedule = field(default_factory=GammaSchedule)
    init: str = "uniform01"  # used when run() gets no explicit F0
    seed: int = 0
    sigma_floor: float = 0.1  # effective noise level for (near-)noiseless data
    fast: bool | None = None  # likelihood path override

    def __post_init__(self):
        if self.max_iters < 1 or self.inner_steps < 1:
            raise ValueError("max_iters and inner_steps must be >= 1")
        if self.learning_rate <= 0 or self.stop_eps < 0:
            raise ValueError("learning_rate must be > 0 and stop_eps >= 0")
        if self.init not in ("uniform01", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")


@dataclass
class IterationRecord:
    iteration: int
    q_value: float
    delta: float
    gamma: float
    seconds: float


@dataclass
class EmState:
    estimate: np.ndarray
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)


def em_step(
    F: np.ndarray,
    patches: PatchSet,
    prior,
    config: EmConfig,
    tau: int,
    K: int,
) -> tuple[np.ndarray, float]:
    """One EM iteration; returns (new estimate, Q value at the old one).

    The posterior is computed once at F; the inner ascent re-evaluates the
    Q-gradient at each iterate against that frozen posterior.
    """
    post, q_at_f = e_step(F, patches, K, fast=config.fast)
    g = gamma(config.gamma, tau, config.max_iters)
    current = np.asarray(F, dtype=np.float64)
    for _ in range(config.inner_steps):
        step = q_gradient(current, patches, post)
        if g != 0.0:
            step = step + g * score_at_data(prior, current.ravel()).reshape(current.shape)
        current = current + config.learning_rate * step
        if not np.all(np.isfinite(current)):
            raise SolverAbortError(
                "estimate became non-finite during gradient ascent; "
                "lower the learning rate"
            )
    return current, q_at_f


def run(
    measurement,
    F0: np.ndarray | None,
    prior,
    config: EmConfig,
) -> tuple[np.ndarray, EmState]:
    """Iterate EM on a measurement until convergence or the iteration cap.

    F0 = None draws the initial estimate from U[0, 1] using config.seed.
    The effective noise level is the measurement's sigma, floored at
    config.sigma_floor so noiseless data stays well-posed.
    """
    L = measurement.spec.L
    K = measurement.spec.K
    if F0 is None:
        if config.init == "provided":
            raise ValueError("config expects a provided initial estimate")
        F0 = np.random.default_rng(config.seed).uniform(0.0, 1.0, size=(L, L))
    F = np.asarray(F0, dtype=np.float64).copy()
    if F.shape != (L, L):
        raise ValueError(f"initial estimate shape {F.shape} != ({L}, {L})")

    patches = partition(measurement)
    patches.sigma = max(patches.sigma, config.sigma_floor)

    state = EmState(estimate=F)
    for tau in range(config.max_iters):
        started = time.perf_counter()
        new_f, q_at_f = em_step(F, patches, prior, config, tau, K)
        delta = float(np.linalg.norm(new_f - F))
        state.history.append(
            IterationRecord(
                iteration=tau,
                q_value=q_at_f,
                delta=delta,
                gamma=gamma(config.gamma, tau, config.max_iters),
                seconds=time.perf_counter() - started,
            )
        )
        F = new_f
        state.iteration = tau + 1
        if delta < config.stop_eps:
            break
    state.estimate = F
    return F, state
