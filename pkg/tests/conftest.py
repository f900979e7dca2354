"""Shared fixtures; the trained Gaussian-law prior is expensive, so it is
built once per session and reused by the training and acceptance tests."""

import time
from types import SimpleNamespace

import numpy as np
import pytest

from mtdem.datasets import gaussian_mean, gaussian_samples
from mtdem.scorenet import init_mlp
from mtdem.sde import VpSchedule
from mtdem.training import TrainConfig, train


@pytest.fixture(scope="session")
def gaussian_prior_bundle():
    """Score net trained on 10,000 draws of the N(mu, I) family with the
    package-default recipe; carries everything needed to evaluate it."""
    rng = np.random.default_rng(0)
    mu = gaussian_mean(5, rng)
    data = gaussian_samples(mu, 10_000, rng)
    net = init_mlp([25, 128, 128, 25], time_conditioned=True, seed=0)
    schedule = VpSchedule()
    config = TrainConfig(seed=1)
    started = time.perf_counter()
    trained, history = train(net, data, schedule, config)
    seconds = time.perf_counter() - started
    return SimpleNamespace(
        mu=mu,
        mean_flat=mu.ravel(),
        data=data,
        net=trained,
        history=history,
        schedule=schedule,
        train_seconds=seconds,
    )
