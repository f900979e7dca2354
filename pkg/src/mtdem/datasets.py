"""The Gaussian image family used for training priors and drawing targets.

Samples follow N(mu, I) where each entry of the mean mu is drawn once,
i.i.d. uniform over {0, 1, 2, 3, 4}.  Training sets and held-out target
images come from the same law with independent seeded streams, so targets
are never part of the training sample.
"""

from __future__ import annotations

import numpy as np


def gaussian_mean(side: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the mean image: entries i.i.d. uniform over {0,...,4}."""
    return rng.integers(0, 5, size=(side, side)).astype(np.float64)


def gaussian_samples(mean: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` flattened samples of N(mean, I), shape (count, side^2)."""
    mean = np.asarray(mean, dtype=np.float64).ravel()
    return mean[None, :] + rng.standard_normal((count, mean.size))
