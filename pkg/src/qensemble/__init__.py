"""Ensembles of small variational quantum classifiers with OneVsAll error correction."""

from .circuits import VARIANT_IDS, CircuitSpec, build_core_variant, build_onevsall, evaluate
from .data import ClassMap, EncodedDataset, prepare, preset
from .ensemble import EnsembleModel, OneVsOneModel, PlainEnsembleModel, decode_bits, predict
from .kernels import BACKEND
from .statevector import NoiseModel, QuantumState
from .training import TrainConfig, evaluate_model, load_checkpoint, save_checkpoint, train_method

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "VARIANT_IDS",
    "CircuitSpec",
    "ClassMap",
    "EncodedDataset",
    "EnsembleModel",
    "NoiseModel",
    "OneVsOneModel",
    "PlainEnsembleModel",
    "QuantumState",
    "TrainConfig",
    "build_core_variant",
    "build_onevsall",
    "decode_bits",
    "evaluate",
    "evaluate_model",
    "load_checkpoint",
    "predict",
    "prepare",
    "preset",
    "save_checkpoint",
    "train_method",
]
