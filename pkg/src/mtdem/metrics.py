"""Evaluation metrics.

Targets are recoverable only up to a grid rotation, so the error is the
Frobenius relative error minimized over the K candidate rotations of the
estimate.
"""

from __future__ import annotations

import numpy as np

from .gridops import rotate


def relative_error(F_true: np.ndarray, F_hat: np.ndarray, K: int) -> float:
    """min_k ||F_true - rotate(F_hat, k)||_F / ||F_true||_F."""
    F_true = np.asarray(F_true, dtype=np.float64)
    F_hat = np.asarray(F_hat, dtype=np.float64)
    if F_true.shape != F_hat.shape:
        raise ValueError(f"shape mismatch {F_true.shape} vs {F_hat.shape}")
    denom = np.linalg.norm(F_true)
    if denom == 0.0:
        raise ValueError("ground truth is identically zero")
    errs = [np.linalg.norm(F_true - rotate(F_hat, k, K)) for k in range(K)]
    return float(min(errs) / denom)
