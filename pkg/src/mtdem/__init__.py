"""Multi-target detection: approximate EM image recovery with pluggable
score-based diffusion priors."""

from .emsolver import EmConfig, EmState, GammaSchedule, run
from .gridops import circ_shift, crop, rotate, zero_pad
from .likelihood import PatchSet, PosteriorTable, partition, posterior, q_gradient, q_value
from .metrics import relative_error
from .priors import GaussianScore, NetScore, ZeroScore, load_weights, save_weights
from .scorenet import MlpScoreNet, init_mlp
from .sde import VpSchedule, perturb
from .synth import Measurement, MeasurementSpec, snr_to_sigma, synthesize
from .training import TrainConfig, dsm_loss, ism_loss, train

__version__ = "0.1.0"

__all__ = [
    "EmConfig",
    "EmState",
    "GammaSchedule",
    "GaussianScore",
    "Measurement",
    "MeasurementSpec",
    "MlpScoreNet",
    "NetScore",
    "PatchSet",
    "PosteriorTable",
    "TrainConfig",
    "VpSchedule",
    "ZeroScore",
    "circ_shift",
    "crop",
    "dsm_loss",
    "init_mlp",
    "ism_loss",
    "load_weights",
    "partition",
    "perturb",
    "posterior",
    "q_gradient",
    "q_value",
    "relative_error",
    "rotate",
    "run",
    "save_weights",
    "snr_to_sigma",
    "synthesize",
    "train",
    "zero_pad",
]
