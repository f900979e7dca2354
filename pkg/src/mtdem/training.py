"""Score-matching losses and the mini-batch trainer.

Training minimizes the denoising form: perturb each clean sample along the
diffusion, then regress the network output onto the conditional score
-z / sqrt(var(t)), weighted by lambda(t) = var(t).  The trace-based form
(0.5 ||s||^2 + tr(ds/dx)) is implemented as a diagnostic with two
independent trace evaluations (exact layerwise and finite differences) so
trained scores can be cross-checked without second-order machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scorenet import MlpScoreNet, backward, forward, input_jacobian
from .sde import VpSchedule, self_broadcast


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; lower the learning rate."""


@dataclass
class TrainConfig:
    batch_size: int = 128
    steps: int = 6000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    t_cutoff: float = 1e-3  # keeps 1/sqrt(var) finite near t = 0
    weighting: str = "variance"
    weight_decay: float = 0.1  # decoupled, applied as p *= 1 - lr * wd
    ema_decay: float = 0.999  # 0 disables weight averaging
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.learning_rate <= 0:
            raise ValueError("batch size, steps and learning rate must be positive")
        if not 0.0 < self.t_cutoff < 1.0:
            raise ValueError("t_cutoff must lie in (0, horizon)")
        if self.optimizer != "adam":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.weighting != "variance":
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.weight_decay < 0 or not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("weight_decay must be >= 0 and ema_decay in [0, 1)")


def draw_dsm_batch(
    schedule: VpSchedule,
    x0: np.ndarray,
    rng: np.random.Generator,
    t_cutoff: float = 1e-3,
):
    """Sample (t, xt, z) for one denoising pass: t ~ U(t_cutoff, T],
    z ~ N(0, I), xt = m(t) x0 + sqrt(var(t)) z."""
    n = x0.shape[0]
    t = rng.uniform(t_cutoff, schedule.horizon, size=n)
    z = rng.standard_normal(x0.shape)
    m = self_broadcast(schedule.mean_coeff(t), x0)
    s = self_broadcast(schedule.std(t), x0)
    return t, m * x0 + s * z, z


def dsm_loss_at(
    net: MlpScoreNet,
    schedule: VpSchedule,
    t: np.ndarray,
    xt: np.ndarray,
    z: np.ndarray,
):
    """Denoising loss and parameter gradients at fixed draws (t, xt, z).

    loss = mean_i var(t_i) ||s(xt_i, t_i) + z_i / sqrt(var(t_i))||^2
    """
    var = schedule.var(t)
    target = -z / self_broadcast(np.sqrt(var), z)
    cache: list = []
    s = forward(net, xt, t, cache=cache)
    diff = s - target
    n = xt.shape[0]
    loss = float((var * np.einsum("ij,ij->i", diff, diff)).sum() / n)
    dout = (2.0 / n) * self_broadcast(var, diff) * diff
    grads_w, grads_b, _ = backward(net, cache, dout)
    return loss, grads_w, grads_b


def dsm_loss(
    net: MlpScoreNet,
    batch: np.ndarray,
    schedule: VpSchedule,
    rng: np.random.Generator,
    t_cutoff: float = 1e-3,
):
    """One Monte-Carlo denoising-loss evaluation on a batch of clean
    samples; returns (loss, weight grads, bias grads)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, d) array")
    if not net.time_conditioned:
        raise ValueError("denoising loss needs a time-conditioned net")
    t, xt, z = draw_dsm_batch(schedule, batch, rng, t_cutoff)
    return dsm_loss_at(net, schedule, t, xt, z)


def ism_loss(net: MlpScoreNet, batch: np.ndarray, trace: str = "exact") -> float:
    """Trace-form score-matching loss, mean_i [0.5 ||s(x_i)||^2 + tr J(x_i)].

    ``trace`` picks the Jacobian-trace evaluation: "exact" multiplies the
    layer Jacobians out, "fd" central-differences each diagonal entry with
    step 1e-5.  Diagnostic only; the trainer uses the denoising loss.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, d) array")
    if net.time_conditioned:
        raise ValueError("trace loss is defined for unconditioned nets")
    s = forward(net, batch)
    total = 0.5 * np.einsum("ij,ij->i", s, s)
    if trace == "exact":
        tr = np.array([np.trace(input_jacobian(net, x)) for x in batch])
    elif trace == "fd":
        tr = np.array([_fd_trace(net, x) for x in batch])
    else:
        raise ValueError(f"unknown trace method {trace!r}")
    return float((total + tr).mean())


def _fd_trace(net: MlpScoreNet, x: np.ndarray, step: float = 1e-5) -> float:
    tr = 0.0
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        tr += (forward(net, hi)[i] - forward(net, lo)[i]) / (2.0 * step)
    return float(tr)


class Adam:
    """Standard first-order adaptive-moment optimizer over a list of
    parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** self.step_count
        correction2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def train(
    net: MlpScoreNet,
    dataset: np.ndarray,
    schedule: VpSchedule,
    config: TrainConfig,
) -> tuple[MlpScoreNet, list[float]]:
    """Mini-batch denoising-score-matching training.

    Uses decoupled weight decay and keeps an exponential moving average of
    the parameters; the EMA net is what gets returned (with the raw one
    when ema_decay is 0).  Both damp the small-time drift of the score,
    where the regression targets are noisiest.  The input net is left
    untouched; everything is deterministic under a fixed config seed.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 2 or dataset.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, d) array")
    net = net.copy()
    rng = np.random.default_rng(config.seed)
    params = net.weights + net.biases
    opt = Adam(params, lr=config.learning_rate)
    shrink = 1.0 - config.learning_rate * config.weight_decay
    ema = [p.copy() for p in params] if config.ema_decay else None
    history: list[float] = []
    for _ in range(config.steps):
        idx = rng.integers(0, dataset.shape[0], size=config.batch_size)
        loss, grads_w, grads_b = dsm_loss(net, dataset[idx], schedule, rng, config.t_cutoff)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"loss became {loss} at step {len(history)}")
        opt.step(grads_w + grads_b)
        if config.weight_decay:
            for p in params:
                p *= shrink
        if ema is not None:
            for e, p in zip(ema, params):
                e *= config.ema_decay
                e += (1.0 - config.ema_decay) * p
        history.append(loss)
    if ema is not None:
        net.weights = ema[: len(net.weights)]
        net.biases = ema[len(net.weights):]
    return net, history
