"""Diffusion-based generator for synthetic right-censored survival data."""

from .dataset import Cohort, FeatureSchema, SurvivalRecord, load_csv, load_schema, write_csv
from .diffusion import NoiseSchedule
from .model import Model
from .sampler import SamplerConfig, sample
from .survival_loss import SurvLossConfig
from .trainer import TrainerConfig, train

__version__ = "0.1.0"

__all__ = [
    "Cohort",
    "FeatureSchema",
    "Model",
    "NoiseSchedule",
    "SamplerConfig",
    "SurvLossConfig",
    "SurvivalRecord",
    "TrainerConfig",
    "load_csv",
    "load_schema",
    "sample",
    "train",
    "write_csv",
]
