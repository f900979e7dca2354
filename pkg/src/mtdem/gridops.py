"""Discrete image operators: rotation, zero-padding, circular shift, crop.

These are the building blocks of the patch observation model

    patch = crop(circ_shift(zero_pad(rotate(F, k)), (lx, ly))) + noise

and every one of them comes with its exact adjoint under the Frobenius
inner product, which is what pulls patch residuals back to image space.

Conventions (fixed here, used everywhere):
  * images are square numpy arrays indexed [i, j] with i the row (vertical)
    index; an L x L image zero-pads to 2L x 2L,
  * rotation index k on a grid of K angles means angle 2*pi*k/K
    counter-clockwise (k=1, K=4 agrees with ``np.rot90``),
  * circ_shift(P, (lx, ly))[i, j] = P[(i+lx) mod 2L, (j+ly) mod 2L],
    i.e. content moves up and to the left; mod is always non-negative,
  * angles that are exact multiples of 90 degrees are index permutations
    (lossless); all other angles use bilinear interpolation about the
    pixel-center of the grid with zero fill outside the source.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _as_square(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError(f"expected a square 2-D array, got shape {F.shape}")
    return F


@lru_cache(maxsize=128)
def _bilinear_map(side: int, k: int, K: int):
    """Bilinear interpolation tables for rotation by 2*pi*k/K.

    Returns (src, weights) where src has shape (side*side, 4) holding flat
    source indices for the 4 neighbours of each output pixel and weights the
    matching bilinear weights; out-of-bounds neighbours carry weight 0 and
    index 0.
    """
    phi = 2.0 * np.pi * k / K
    c = (side - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    u = ii - c
    v = jj - c
    # source offsets = R(-phi) applied to (row, col); matches rot90 at 90 deg
    us = u * np.cos(phi) + v * np.sin(phi)
    vs = -u * np.sin(phi) + v * np.cos(phi)
    si = us + c
    sj = vs + c
    i0 = np.floor(si).astype(np.int64)
    j0 = np.floor(sj).astype(np.int64)
    di = si - i0
    dj = sj - j0
    src = np.zeros((side * side, 4), dtype=np.int64)
    wts = np.zeros((side * side, 4), dtype=np.float64)
    corners = ((i0, j0, (1 - di) * (1 - dj)), (i0, j0 + 1, (1 - di) * dj),
               (i0 + 1, j0, di * (1 - dj)), (i0 + 1, j0 + 1, di * dj))
    for n, (ci, cj, w) in enumerate(corners):
        ok = (ci >= 0) & (ci < side) & (cj >= 0) & (cj < side)
        src[:, n] = np.where(ok, ci * side + cj, 0).ravel()
        wts[:, n] = np.where(ok, w, 0.0).ravel()
    src.setflags(write=False)
    wts.setflags(write=False)
    return src, wts


def rotate(F: np.ndarray, k: int, K: int) -> np.ndarray:
    """Rotate an image counter-clockwise by 2*pi*k/K about the grid center.

    Multiples of 90 degrees are exact index permutations; other angles use
    bilinear interpolation with zero fill outside the source.
    """
    F = _as_square(F)
    k = k % K
    if (4 * k) % K == 0:
        return np.rot90(F, (4 * k) // K).copy()
    src, wts = _bilinear_map(F.shape[0], k, K)
    out = (F.ravel()[src] * wts).sum(axis=1)
    return out.reshape(F.shape)


def adjoint_rotate(F: np.ndarray, k: int, K: int) -> np.ndarray:
    """Adjoint of ``rotate``: inverse permutation at 90-degree multiples,
    transposed bilinear scatter otherwise."""
    F = _as_square(F)
    k = k % K
    if (4 * k) % K == 0:
        return np.rot90(F, -((4 * k) // K)).copy()
    src, wts = _bilinear_map(F.shape[0], k, K)
    out = np.zeros(F.size, dtype=np.float64)
    np.add.at(out, src.ravel(), (F.reshape(-1, 1) * wts).ravel())
    return out.reshape(F.shape)


def zero_pad(F: np.ndarray) -> np.ndarray:
    """Pad an L x L image to 2L x 2L, content in the top-left block."""
    F = _as_square(F)
    L = F.shape[0]
    P = np.zeros((2 * L, 2 * L), dtype=np.float64)
    P[:L, :L] = F
    return P


def adjoint_pad(P: np.ndarray) -> np.ndarray:
    """Adjoint of ``zero_pad``: the top-left L x L block of a 2L x 2L grid."""
    P = _as_square(P)
    if P.shape[0] % 2:
        raise ValueError("padded grid side must be even")
    L = P.shape[0] // 2
    return P[:L, :L].copy()


def circ_shift(P: np.ndarray, shift: tuple[int, int]) -> np.ndarray:
    """Circularly shift so that result[i, j] = P[(i+lx) mod n, (j+ly) mod n]."""
    P = _as_square(P)
    lx, ly = shift
    return np.roll(P, (-lx, -ly), axis=(0, 1))


def adjoint_shift(P: np.ndarray, shift: tuple[int, int]) -> np.ndarray:
    """Adjoint of ``circ_shift``: the shift by the negated offsets."""
    P = _as_square(P)
    lx, ly = shift
    return np.roll(P, (lx, ly), axis=(0, 1))


def crop(P: np.ndarray) -> np.ndarray:
    """Crop a 2L x 2L grid to its top-left L x L block."""
    P = _as_square(P)
    if P.shape[0] % 2:
        raise ValueError("padded grid side must be even")
    L = P.shape[0] // 2
    return P[:L, :L].copy()


def adjoint_crop(G: np.ndarray) -> np.ndarray:
    """Adjoint of ``crop``: embed an L x L image in the top-left of a zero
    2L x 2L grid (identical to ``zero_pad``)."""
    return zero_pad(G)
