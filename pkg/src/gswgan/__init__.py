"""Lipschitz-constrained WGANs on numpy: GroupSort critics, Björck projection, exact W1."""

from .config import TrainConfig, load_train_config, preset, train_config_from_dict
from .data import SampleBatch, gaussian_noise, mnist_load, pca_fit, pca_transform, swiss_roll
from .errors import (ConfigError, EmptyBatchError, FormatError, GswganError, NumericError,
                     ShapeError)
from .experiments import SweepResult, SweepSpec, plot_curves, run_sweep
from .networks import MlpParams, MlpSpec, bjorck_orthonormalize, forward, init_params
from .ot import W1Report, cost_matrix, emd_exact, exact_w1, sliced_w1, w1_1d_sorted
from .training import TrainLog, train, train_from_config

__version__ = "0.1.0"
