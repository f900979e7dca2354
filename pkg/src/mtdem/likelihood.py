"""E-step machinery: patch partitioning, per-patch hypothesis tables,
posterior weights, and the value and analytic gradient of the expected
complete-data log-likelihood.

Each L x L patch of the measurement is explained by one of (2L)^2 circular
shifts times K rotations of the target image (shifts that land the content
entirely outside the crop window act as "no image here" hypotheses).  The
per-hypothesis log-likelihood of a patch M under template T is

    -||M - T||_F^2 / (2 sigma^2)

with the Gaussian normalizing constant dropped everywhere; it cancels in
the posterior and only offsets the Q value by a known constant.

Two evaluation paths are provided: a direct one that materializes every
template, and an FFT cross-correlation path that expands
||M - T||^2 = ||M||^2 - 2<M, T> + ||T||^2 and computes the inner products
for all shifts at once.  The direct path is the default for small images
(side <= 8); the FFT path gives the O(N^2)-per-iteration scaling needed
for large ones.

Table layout: index (shift, rotation) with the shift flattened row-major,
s = lx * 2L + ly.  Patch order: patch (a, b) = M[aL:(a+1)L, bL:(b+1)L]
flattened row-major, m = a * (N/L) + b.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gridops import adjoint_rotate, rotate, zero_pad

# direct template evaluation is exact and fast enough up to this side
FAST_PATH_MIN_SIDE = 9

# cap on D * hypotheses * L^2 scratch elements in the direct path
_DIRECT_CHUNK_ELEMS = 2 ** 24


@dataclass
class PatchSet:
    """Non-overlapping L x L tiles of a measurement, in row-major order."""

    patches: np.ndarray  # (D, L, L)
    sigma: float

    @property
    def count(self) -> int:
        return self.patches.shape[0]

    @property
    def side(self) -> int:
        return self.patches.shape[1]


@dataclass
class PosteriorTable:
    """Per-patch posterior weights over (shift, rotation) hypotheses."""

    weights: np.ndarray  # (D, (2L)^2, K)

    @property
    def rotations(self) -> int:
        return self.weights.shape[2]


def partition(measurement) -> PatchSet:
    """Split a measurement into its (N/L)^2 non-overlapping patches."""
    values = np.asarray(measurement.values, dtype=np.float64)
    L = measurement.spec.L
    N = values.shape[0]
    if values.shape != (N, N) or N % L:
        raise ValueError(f"measurement shape {values.shape} is not a multiple of L={L}")
    g = N // L
    patches = values.reshape(g, L, g, L).swapaxes(1, 2).reshape(g * g, L, L)
    return PatchSet(patches=patches, sigma=float(measurement.sigma))


@lru_cache(maxsize=32)
def _hypothesis_maps(L: int):
    """Gather tables for building templates from an L x L rotated image.

    For flat shift s = lx*2L + ly and patch pixel q = i*L + j the template
    value is F[(i+lx) mod 2L, (j+ly) mod 2L] when that index falls in the
    unpadded block, else 0.  Returns (gather, mask) of shape ((2L)^2, L^2):
    flat source indices into F (0 where masked) and the 0/1 validity mask.
    """
    two_l = 2 * L
    s = np.arange(two_l * two_l)
    lx = s // two_l
    ly = s % two_l
    i, j = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    u = (i.ravel()[None, :] + lx[:, None]) % two_l
    v = (j.ravel()[None, :] + ly[:, None]) % two_l
    valid = (u < L) & (v < L)
    gather = np.where(valid, u * L + v, 0)
    gather.setflags(write=False)
    valid.setflags(write=False)
    return gather, valid


def hypothesis_templates(F: np.ndarray, K: int) -> np.ndarray:
    """All K * (2L)^2 cropped-shift-rotation templates of F.

    Returns an array of shape (K, (2L)^2, L^2); row (k, s) is the flattened
    template crop(circ_shift(zero_pad(rotate(F, k)), s)).
    """
    F = np.asarray(F, dtype=np.float64)
    L = F.shape[0]
    gather, valid = _hypothesis_maps(L)
    out = np.empty((K, gather.shape[0], L * L))
    for k in range(K):
        fk = rotate(F, k, K).ravel()
        out[k] = fk[gather] * valid
    return out


def log_likelihood_tables(
    F: np.ndarray,
    patches: np.ndarray,
    sigma: float,
    K: int,
    fast: bool | None = None,
) -> np.ndarray:
    """Hypothesis log-likelihood tables for a stack of patches.

    Returns an array of shape (D, (2L)^2, K) whose (m, s, k) entry is
    -||patch_m - template(s, k)||_F^2 / (2 sigma^2).

    ``fast`` selects the FFT cross-correlation path; the default (None)
    uses it only for sides >= FAST_PATH_MIN_SIDE.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive for likelihood evaluation")
    F = np.asarray(F, dtype=np.float64)
    patches = np.asarray(patches, dtype=np.float64)
    L = F.shape[0]
    if fast is None:
        fast = L >= FAST_PATH_MIN_SIDE
    if fast:
        sq = _squared_distances_fft(F, patches, K)
    else:
        sq = _squared_distances_direct(F, patches, K)
    return -sq / (2.0 * sigma * sigma)


def _squared_distances_direct(F, patches, K):
    """||patch - template||^2 by explicit per-hypothesis residuals."""
    L = F.shape[0]
    D = patches.shape[0]
    S = (2 * L) ** 2
    templates = hypothesis_templates(F, K)  # (K, S, L^2)
    flat = patches.reshape(D, L * L)
    out = np.empty((D, S, K))
    chunk = max(1, _DIRECT_CHUNK_ELEMS // (K * S * L * L))
    for lo in range(0, D, chunk):
        hi = min(D, lo + chunk)
        resid = flat[lo:hi, None, None, :] - templates[None, :, :, :]
        out[lo:hi] = np.einsum("mksp,mksp->msk", resid, resid)
    return out


def _squared_distances_fft(F, patches, K):
    """||patch - template||^2 via ||M||^2 - 2<M, T> + ||T||^2, with the
    inner products over all shifts done as one circular cross-correlation."""
    L = F.shape[0]
    two_l = 2 * L
    D = patches.shape[0]
    S = two_l * two_l

    padded = np.zeros((D, two_l, two_l))
    padded[:, :L, :L] = patches
    fft_patches = np.fft.rfft2(padded)

    mask = np.zeros((two_l, two_l))
    mask[:L, :L] = 1.0
    fft_mask = np.fft.rfft2(mask)

    patch_norms = np.einsum("mij,mij->m", patches, patches)

    out = np.empty((D, S, K))
    for k in range(K):
        zf = zero_pad(rotate(F, k, K))
        fft_zf = np.fft.rfft2(zf)
        # <M, T_s> for every shift s in one pass
        cross = np.fft.irfft2(np.conj(fft_patches) * fft_zf[None], s=(two_l, two_l))
        # ||T_s||^2 for every shift s
        tnorm = np.fft.irfft2(np.conj(fft_mask) * np.fft.rfft2(zf * zf), s=(two_l, two_l))
        out[:, :, k] = (
            patch_norms[:, None]
            - 2.0 * cross.reshape(D, S)
            + tnorm.reshape(1, S)
        )
    return out


def patch_log_likelihood_table(
    F: np.ndarray,
    patch: np.ndarray,
    sigma: float,
    K: int,
    fast: bool | None = None,
) -> np.ndarray:
    """Log-likelihood table of one patch, shape ((2L)^2, K)."""
    patch = np.asarray(patch, dtype=np.float64)
    return log_likelihood_tables(F, patch[None], sigma, K, fast=fast)[0]


def posterior(
    F: np.ndarray,
    patches: PatchSet,
    K: int,
    fast: bool | None = None,
) -> PosteriorTable:
    """Posterior weights over (shift, rotation) per patch.

    The nuisance prior is uniform over all (2L)^2 * K hypotheses, so the
    posterior is the softmax of the log-likelihood table, computed in log
    space with per-patch max subtraction.
    """
    tables = log_likelihood_tables(F, patches.patches, patches.sigma, K, fast=fast)
    return PosteriorTable(weights=_softmax_per_patch(tables))


def e_step(
    F: np.ndarray,
    patches: PatchSet,
    K: int,
    fast: bool | None = None,
) -> tuple[PosteriorTable, float]:
    """Posterior table plus the Q value at the expansion point.

    Returns (posterior, Q(F | F)); the value comes for free from the same
    tables and is what the solver logs each iteration.
    """
    tables = log_likelihood_tables(F, patches.patches, patches.sigma, K, fast=fast)
    weights = _softmax_per_patch(tables)
    return PosteriorTable(weights=weights), float((weights * tables).sum())


def _softmax_per_patch(tables: np.ndarray) -> np.ndarray:
    D = tables.shape[0]
    flat = tables.reshape(D, -1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    w /= w.sum(axis=1, keepdims=True)
    return w.reshape(tables.shape)


def q_value(
    F: np.ndarray,
    patches: PatchSet,
    post: PosteriorTable,
    fast: bool | None = None,
) -> float:
    """Posterior-weighted expected log-likelihood (up to the dropped
    Gaussian constant); used for monitoring and gradient checks."""
    K = post.rotations
    tables = log_likelihood_tables(F, patches.patches, patches.sigma, K, fast=fast)
    return float((post.weights * tables).sum())


def q_gradient(F: np.ndarray, patches: PatchSet, post: PosteriorTable) -> np.ndarray:
    """Analytic gradient of the Q value with respect to the image.

    Every hypothesis residual is pulled back through the adjoints of
    crop, shift, pad, and rotation, weighted by its posterior mass:

        (1/sigma^2) sum_{m,s,k} w[m,s,k] * R_k^T S_s^T (M_m - S_s R_k F)

    where S_s is the crop-shift-pad template map.  The per-rotation inner
    sums collapse to one weighted patch average and one scatter-add, so the
    cost is O(D * (2L)^2 * K) rather than one pullback per hypothesis.
    """
    F = np.asarray(F, dtype=np.float64)
    L = F.shape[0]
    K = post.rotations
    W = post.weights  # (D, S, K)
    flat_patches = patches.patches.reshape(patches.count, L * L)
    gather, valid = _hypothesis_maps(L)
    grad = np.zeros((L, L))
    for k in range(K):
        wk = W[:, :, k]  # (D, S)
        fk = rotate(F, k, K).ravel()
        templates = fk[gather] * valid  # (S, L^2)
        weighted_patches = wk.T @ flat_patches  # (S, L^2)
        mass = wk.sum(axis=0)  # (S,)
        g = weighted_patches - mass[:, None] * templates
        acc = np.bincount(gather[valid], weights=g[valid], minlength=L * L)
        grad += adjoint_rotate(acc.reshape(L, L), k, K)
    return grad / (patches.sigma * patches.sigma)
