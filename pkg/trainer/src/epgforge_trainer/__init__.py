"""Trainer for the GRU signal surrogate.

Consumes "EPGT" dataset files exported by the simulation package, fits the
three-layer GRU with an equal-weighted MAE over signal and derivative
channels, and writes "GRUW" weight files that the inference side loads
directly.  ``verify.verify_roundtrip`` cross-checks the two forward
implementations through the shared file formats.
"""

from .formats import DatasetView, WeightBundle, read_dataset, read_weights, write_weights
from .model import GruSurrogate, predict_dataset
from .train import TrainConfig, TrainingDiverged, train
from .verify import ContractViolation, verify_roundtrip

__version__ = "0.1.0"
