"""Variational GAN training with critic sample re-weighting and
probability-ratio-clipped generator updates, plus a finite-space engine
where every quantity has a brute-force closed form."""

from .distributions import Batch, DistSpec, categorical, grid, mixture1d, ring
from .estimator import RatioClippedGAN
from .finite import FiniteSpace, QDist, run_oracle_suite
from .losses import ImportanceWeights, RatioEstimate
from .nets import MlpSpec, ModelParams, Snapshot
from .recording import TrainingRecord
from .training import TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "DistSpec",
    "categorical",
    "grid",
    "mixture1d",
    "ring",
    "RatioClippedGAN",
    "FiniteSpace",
    "QDist",
    "run_oracle_suite",
    "ImportanceWeights",
    "RatioEstimate",
    "MlpSpec",
    "ModelParams",
    "Snapshot",
    "TrainingRecord",
    "TrainingConfig",
    "train",
    "__version__",
]
