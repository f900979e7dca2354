"""Synthetic measurement generation with full ground-truth bookkeeping.

A measurement is an N x N frame containing p randomly rotated copies of an
L x L target at well-separated random locations, plus i.i.d. Gaussian
pixel noise:

    M = sum_i rotate(F, k_i) placed at corner_i  +  noise(0, sigma^2)

The occurrence count is p = round(density * N^2 / L^2) and every pair of
occurrences keeps a Euclidean center distance greater than 2L (the
"not densely packed" regime), which guarantees that each measurement patch
sees at most one, possibly clipped, occurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gridops import rotate

# attempts per requested occurrence before giving up on dart throwing
PLACEMENT_ATTEMPTS_PER_OCCURRENCE = 1000


class PlacementError(RuntimeError):
    """Dart throwing could not place the requested occurrences; the density
    is too high for the separation rule."""


@dataclass
class MeasurementSpec:
    """Parameters of one synthetic measurement.

    Exactly one of ``snr`` and ``sigma`` must be given; the noise level is
    derived from the target when ``snr`` is used.  ``area`` overrides the
    pixel area A in SNR = ||F||_F^2 / (A sigma^2) (defaults to L^2).
    """

    N: int
    L: int
    K: int = 4
    density: float = 0.1
    snr: float | None = None
    sigma: float | None = None
    seed: int = 0
    area: int | None = None

    def __post_init__(self):
        if self.N % self.L:
            raise ValueError(f"N={self.N} must be a multiple of L={self.L}")
        if not 0.0 < self.density < 1.0:
            raise ValueError("density must lie in (0, 1)")
        if (self.snr is None) == (self.sigma is None):
            raise ValueError("give exactly one of snr and sigma")
        if self.snr is not None and self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def occurrences(self) -> int:
        return round(self.density * self.N ** 2 / self.L ** 2)


@dataclass
class Measurement:
    """An N x N measurement plus the planted ground truth."""

    values: np.ndarray
    truth: list[tuple[tuple[int, int], int]] = field(default_factory=list)
    sigma: float = 0.0
    spec: MeasurementSpec | None = None


def snr_to_sigma(F: np.ndarray, snr: float, area: int | None = None) -> float:
    """Noise std for a requested SNR = ||F||_F^2 / (A sigma^2).

    A defaults to the full L x L frame area; pass ``area`` to count only
    the support instead.
    """
    F = np.asarray(F, dtype=np.float64)
    if snr <= 0:
        raise ValueError("snr must be positive")
    energy = float((F * F).sum())
    if energy == 0.0:
        raise ValueError("target image is identically zero; SNR is undefined")
    if area is None:
        area = F.size
    return math.sqrt(energy / (area * snr))


def place_occurrences(spec: MeasurementSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Dart-throw p top-left corners, all fully inside the frame and all
    pairwise separated by more than 2L (center-to-center Euclidean).

    Raises PlacementError when the retry budget runs out, which signals a
    density too high for the separation rule.
    """
    p = spec.occurrences
    if p == 0:
        return []
    min_dist_sq = (2 * spec.L) ** 2
    high = spec.N - spec.L + 1
    placed: list[tuple[int, int]] = []
    budget = PLACEMENT_ATTEMPTS_PER_OCCURRENCE * p
    for _ in range(budget):
        cand = (int(rng.integers(0, high)), int(rng.integers(0, high)))
        if all((cand[0] - x) ** 2 + (cand[1] - y) ** 2 > min_dist_sq for x, y in placed):
            placed.append(cand)
            if len(placed) == p:
                return placed
    raise PlacementError(
        f"placed {len(placed)}/{p} occurrences in {budget} attempts; "
        f"lower the density or the separation requirement"
    )


def synthesize(
    spec: MeasurementSpec,
    F: np.ndarray,
    rng: np.random.Generator | None = None,
) -> Measurement:
    """Generate one measurement from the spec and target image.

    Rotations are drawn uniformly from the K-angle grid.  With ``rng``
    omitted a fresh generator is seeded from ``spec.seed``, so identical
    (spec, F, seed) produce bit-identical measurements.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (spec.L, spec.L):
        raise ValueError(f"target shape {F.shape} does not match spec L={spec.L}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    sigma = spec.sigma if spec.sigma is not None else snr_to_sigma(F, spec.snr, spec.area)

    locations = place_occurrences(spec, rng)
    rotations = [int(rng.integers(0, spec.K)) for _ in locations]
    values = np.zeros((spec.N, spec.N))
    for (x, y), k in zip(locations, rotations):
        values[x : x + spec.L, y : y + spec.L] += rotate(F, k, spec.K)
    if sigma > 0:
        values += sigma * rng.standard_normal((spec.N, spec.N))
    truth = list(zip(locations, rotations))
    return Measurement(values=values, truth=truth, sigma=float(sigma), spec=spec)
