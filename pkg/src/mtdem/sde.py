"""Variance-preserving forward diffusion with a linear noise schedule.

The process dx = -(beta(t)/2) x dt + sqrt(beta(t)) dw with
beta(t) = beta0 + (beta1 - beta0) t has Gaussian conditional marginals in
closed form:

    x(t) | x(0)  ~  N(m(t) x(0), var(t) I)
    B(t) = beta0 t + (beta1 - beta0) t^2 / 2
    m(t) = exp(-B(t) / 2)          var(t) = 1 - exp(-B(t))

so perturbing data and evaluating the conditional score never needs an SDE
integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VpSchedule:
    beta0: float = 0.1
    beta1: float = 20.0
    horizon: float = 1.0

    def beta(self, t):
        return self.beta0 + (self.beta1 - self.beta0) * np.asarray(t, dtype=np.float64)

    def beta_integral(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t

    def mean_coeff(self, t):
        return np.exp(-0.5 * self.beta_integral(t))

    def var(self, t):
        return 1.0 - np.exp(-self.beta_integral(t))

    def std(self, t):
        return np.sqrt(self.var(t))


def perturb(
    schedule: VpSchedule,
    x0: np.ndarray,
    t,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw x(t) ~ N(m(t) x0, var(t) I); returns (xt, z) with z the standard
    normal draw so that xt = m(t) x0 + sqrt(var(t)) z.

    ``t`` may be a scalar or an array of per-sample times matching the
    leading dimension of a batched ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0) or np.any(t > schedule.horizon):
        raise ValueError(f"t must lie in (0, {schedule.horizon}]")
    z = rng.standard_normal(x0.shape)
    m = self_broadcast(schedule.mean_coeff(t), x0)
    s = self_broadcast(schedule.std(t), x0)
    return m * x0 + s * z, z


def self_broadcast(coeff: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Reshape per-sample coefficients so they broadcast over trailing axes."""
    coeff = np.asarray(coeff, dtype=np.float64)
    if coeff.ndim == 0:
        return coeff
    return coeff.reshape(coeff.shape + (1,) * (like.ndim - coeff.ndim))
