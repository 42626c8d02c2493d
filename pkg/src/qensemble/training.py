"""Training orchestration, evaluation metrics and checkpoints."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .circuits import DEFAULT_BLOCKS, VARIANT_IDS, CircuitSpec, build_core_variant, build_onevsall, evaluate
from .data import EncodedDataset, balanced_binary_view, labels_from_bits, pair_view, sample_batch
from .ensemble import (
    ClassifierModel,
    EnsembleModel,
    EvalCounter,
    OneVsOneModel,
    PlainEnsembleModel,
    calibrate_gamma,
    sgn,
)
from .errors import CheckpointError, ConfigurationError, TrainingError
from .optim import AdamState, adam_step, loss, loss_and_grad
from .statevector import NoiseModel

log = logging.getLogger(__name__)

METHODS = ("corrected", "onevsone", "ensemble")
CHECKPOINT_FORMAT = "qensemble-checkpoint/1"
PLAIN_VARIANT = "V2"

# seed-stream tags; a model's generator depends only on (seed, tag, identity)
_CORE, _OVA, _OVO, _PLAIN = 1, 2, 3, 4


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 0.05
    num_blocks: int = DEFAULT_BLOCKS
    seed: int = 0
    init_low: float = 0.0
    init_high: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.num_blocks < 1:
            raise ConfigurationError("num_blocks must be >= 1")
        if not self.init_high > self.init_low:
            raise ConfigurationError("init range is empty")


@dataclass
class FitResult:
    params: np.ndarray
    best_loss: float
    history: list = field(default_factory=list)  # (epoch, loss, batch_accuracy)


def _batch_accuracy(preds, bits) -> float:
    return float(np.mean(np.all(sgn(preds) == bits, axis=1)))


def fit_circuit(spec: CircuitSpec, view: EncodedDataset, readout, cfg: TrainConfig,
                rng: np.random.Generator) -> FitResult:
    """Adam on the squared loss, one batch per epoch, keeping the best-scoring parameters.

    Each epoch scores the current parameters on its batch before stepping;
    the parameters after the last step are scored on the last batch.
    """
    readout = tuple(readout)
    params = rng.uniform(cfg.init_low, cfg.init_high, spec.num_params)
    state = AdamState.init(spec.num_params, cfg.learning_rate)
    best_loss, best_params = math.inf, params.copy()
    history = []
    batch = None
    for epoch in range(cfg.epochs):
        batch = sample_batch(view, cfg.batch_size, rng)
        value, grad, preds = loss_and_grad(spec, params, batch.features, batch.bits, readout)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise TrainingError(f"{spec.variant_id}: non-finite loss or gradient at epoch {epoch}")
        history.append((epoch, value, _batch_accuracy(preds, batch.bits)))
        if value < best_loss:
            best_loss, best_params = value, params.copy()
        state, params = adam_step(state, params, grad)
    preds = evaluate(spec, params, batch.features, readout=readout)
    value = loss(preds, batch.bits)
    if not np.isfinite(value):
        raise TrainingError(f"{spec.variant_id}: non-finite loss after epoch {cfg.epochs - 1}")
    history.append((cfg.epochs, value, _batch_accuracy(preds, batch.bits)))
    if value < best_loss:
        best_loss, best_params = value, params.copy()
    return FitResult(best_params, best_loss, history)


def _rng(cfg, *identity):
    return np.random.default_rng([cfg.seed, *identity])


def core_accuracy(spec, params, ds: EncodedDataset, idx) -> float:
    outs = evaluate(spec, params, ds.features[idx])[:, :ds.num_bits]
    return float(np.mean(labels_from_bits(outs) == ds.labels[idx]))


def binary_accuracy(spec, params, view: EncodedDataset) -> float:
    out = evaluate(spec, params, view.features)[:, 0]
    return float(np.mean(sgn(out) == view.bits[:, 0]))


def train_core(variant_id: str, ds: EncodedDataset, cfg: TrainConfig, rng=None,
               history: list | None = None) -> ClassifierModel:
    """Train one core variant against the first ``ds.num_bits`` qubits."""
    if ds.num_bits > 5:
        raise ConfigurationError("at most 5 label bits fit the register")
    spec = build_core_variant(variant_id, cfg.num_blocks)
    rng = _rng(cfg, _CORE, VARIANT_IDS.index(variant_id)) if rng is None else rng
    fit = fit_circuit(spec, ds, range(ds.num_bits), cfg, rng)
    if history is not None:
        history.extend(fit.history)
    weight = core_accuracy(spec, fit.params, ds, ds.train_idx)
    return ClassifierModel(spec, fit.params, weight, "core", (), fit.best_loss)


def train_onevsall(target_class: int, ds: EncodedDataset, cfg: TrainConfig, rng=None,
                   history: list | None = None) -> ClassifierModel:
    """Binary membership classifier on a class-balanced view (-1 = member)."""
    rng = _rng(cfg, _OVA, target_class) if rng is None else rng
    view = balanced_binary_view(ds, target_class, rng)
    spec = build_onevsall(cfg.num_blocks)
    fit = fit_circuit(spec, view, (0,), cfg, rng)
    if history is not None:
        history.extend(fit.history)
    return ClassifierModel(spec, fit.params, binary_accuracy(spec, fit.params, view),
                           "ova", (target_class,), fit.best_loss)


def train_pair(first: int, second: int, ds: EncodedDataset, cfg: TrainConfig, rng=None,
               history: list | None = None) -> ClassifierModel:
    """OneVsOne pair classifier; negative output votes for ``first``."""
    rng = _rng(cfg, _OVO, first, second) if rng is None else rng
    view = pair_view(ds, first, second)
    spec = build_onevsall(cfg.num_blocks)
    fit = fit_circuit(spec, view, (0,), cfg, rng)
    if history is not None:
        history.extend(fit.history)
    return ClassifierModel(spec, fit.params, binary_accuracy(spec, fit.params, view),
                           "ovo", (first, second), fit.best_loss)


def train_plain_member(index: int, ds: EncodedDataset, cfg: TrainConfig,
                       history: list | None = None) -> ClassifierModel:
    """One instance of the single-variant baseline ensemble."""
    return train_core(PLAIN_VARIANT, ds, cfg, rng=_rng(cfg, _PLAIN, index), history=history)


def _job(args):
    kind, key, ds, cfg = args
    hist: list = []
    if kind == "core":
        model = train_core(key, ds, cfg, history=hist)
    elif kind == "ova":
        model = train_onevsall(key, ds, cfg, history=hist)
    elif kind == "ovo":
        model = train_pair(key[0], key[1], ds, cfg, history=hist)
    else:
        model = train_plain_member(key, ds, cfg, history=hist)
    log.info("trained %s (best loss %.4f, weight %.3f)", model.name, model.best_loss, model.accuracy_weight)
    return model, hist


def _run_jobs(jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def _histories(results):
    return {model.name: hist for model, hist in results}


def train_corrected(ds: EncodedDataset, cfg: TrainConfig):
    """Five core variants + one OneVsAll per class; gamma calibrated on the training split.

    Returns ``(EnsembleModel, histories)``. Nothing is returned unless every
    model trains.
    """
    jobs = [("core", v, ds, cfg) for v in VARIANT_IDS]
    jobs += [("ova", c, ds, cfg) for c in range(ds.num_classes)]
    results = _run_jobs(jobs, cfg.workers)
    cores = [m for m, _ in results[:len(VARIANT_IDS)]]
    ova = [m for m, _ in results[len(VARIANT_IDS):]]
    gamma = calibrate_gamma(cores, ds.features[ds.train_idx], ds.num_bits)
    return EnsembleModel(cores, ova, gamma, ds.num_bits), _histories(results)


def train_onevsone(ds: EncodedDataset, cfg: TrainConfig):
    jobs = [("ovo", pair, ds, cfg) for pair in combinations(range(ds.num_classes), 2)]
    results = _run_jobs(jobs, cfg.workers)
    return OneVsOneModel([m for m, _ in results], ds.num_classes), _histories(results)


def train_plain_ensemble(ds: EncodedDataset, cfg: TrainConfig):
    jobs = [("plain", i, ds, cfg) for i in range(5)]
    results = _run_jobs(jobs, cfg.workers)
    members = [m for m, _ in results]
    hist = {f"{m.name}#{i}": h for i, (m, h) in enumerate(results)}
    return PlainEnsembleModel(members, ds.num_bits), hist


def train_method(method: str, ds: EncodedDataset, cfg: TrainConfig):
    if method == "corrected":
        return train_corrected(ds, cfg)
    if method == "onevsone":
        return train_onevsone(ds, cfg)
    if method == "ensemble":
        return train_plain_ensemble(ds, cfg)
    raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")


def method_of(model) -> str:
    if isinstance(model, EnsembleModel):
        return "corrected"
    if isinstance(model, OneVsOneModel):
        return "onevsone"
    if isinstance(model, PlainEnsembleModel):
        return "ensemble"
    raise TypeError(f"not a trained model: {type(model).__name__}")


@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: list
    confusion: list
    trigger_rate: float
    circuit_evals: int
    num_samples: int
    num_models: int
    method: str
    split: str
    noise: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (f"{self.method} {self.split}: accuracy {self.accuracy:.4f} on {self.num_samples} samples, "
                f"correction trigger rate {self.trigger_rate:.3f}, {self.circuit_evals} circuit evaluations "
                f"(p1={self.noise['p1']}, p2={self.noise['p2']})")


def evaluate_model(model, ds: EncodedDataset, split: str = "test", noise: NoiseModel | None = None,
                   gamma: float | None = None, shots: int | None = None, seed: int = 0,
                   chunk: int = 256) -> Metrics:
    """Accuracy, confusion matrix, correction trigger rate and circuit-evaluation count."""
    idx = ds.split(split)
    rng = np.random.default_rng([seed, 0xE7A1]) if shots else None
    counter = EvalCounter()
    preds = np.empty(idx.size, dtype=np.int64)
    for start in range(0, idx.size, chunk):
        part = idx[start:start + chunk]
        preds[start:start + part.size] = model.predict(
            ds.features[part], noise=noise, rng=rng, shots=shots, counter=counter, gamma=gamma)
    truth = ds.labels[idx]
    k = ds.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth, preds), 1)
    rows = confusion.sum(axis=1)
    per_class = [float(confusion[c, c] / rows[c]) if rows[c] else None for c in range(k)]
    noise = noise or NoiseModel()
    return Metrics(
        accuracy=float(np.mean(preds == truth)) if idx.size else float("nan"),
        per_class_accuracy=per_class,
        confusion=confusion.tolist(),
        trigger_rate=counter.flagged / counter.samples if counter.samples else 0.0,
        circuit_evals=counter.circuit_evals,
        num_samples=int(idx.size),
        num_models=len(model.models),
        method=method_of(model),
        split=split,
        noise={"p1": noise.p1, "p2": noise.p2},
    )


# -- checkpoints -------------------------------------------------------------


def _model_to_dict(m: ClassifierModel) -> dict:
    return {
        "name": m.name,
        "role": m.role,
        "target": list(m.target),
        "spec": m.spec.to_dict(),
        "params": [float(p) for p in m.params],
        "best_loss": None if math.isnan(m.best_loss) else float(m.best_loss),
        "accuracy_weight": float(m.accuracy_weight),
    }


def _model_from_dict(d: dict) -> ClassifierModel:
    best = d.get("best_loss")
    return ClassifierModel(
        spec=CircuitSpec.from_dict(d["spec"]),
        params=np.array(d["params"], dtype=np.float64),
        accuracy_weight=float(d["accuracy_weight"]),
        role=d["role"],
        target=tuple(d["target"]),
        best_loss=float("nan") if best is None else float(best),
    )


def save_checkpoint(path, model, cfg: TrainConfig, classes=(), extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint; floats round-trip exactly."""
    method = method_of(model)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "method": method,
        "num_classes": int(len(classes)) if classes else None,
        "classes": [int(c) for c in classes],
        "config": asdict(cfg),
        "seed": cfg.seed,
        "models": [_model_to_dict(m) for m in model.models],
    }
    if method == "corrected":
        doc["gamma"] = float(model.gamma)
        doc["num_bits"] = model.num_bits
        doc["num_classes"] = model.num_classes
    elif method == "ensemble":
        doc["num_bits"] = model.num_bits
        doc["num_classes"] = 1 << model.num_bits
    else:
        doc["num_classes"] = model.num_classes
        doc["num_bits"] = int(model.num_classes).bit_length() - 1
    doc.update(extra or {})
    tmp = Path(f"{path}.tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(model, document)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    fmt = doc.get("format")
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: incompatible checkpoint format {fmt!r}, expected {CHECKPOINT_FORMAT!r}")
    models = [_model_from_dict(d) for d in doc["models"]]
    method = doc["method"]
    if method == "corrected":
        cores = [m for m in models if m.role == "core"]
        ova = sorted((m for m in models if m.role == "ova"), key=lambda m: m.target)
        model = EnsembleModel(cores, ova, float(doc["gamma"]), int(doc["num_bits"]))
    elif method == "onevsone":
        model = OneVsOneModel(models, int(doc["num_classes"]))
    elif method == "ensemble":
        model = PlainEnsembleModel(models, int(doc["num_bits"]))
    else:
        raise CheckpointError(f"{path}: unknown method {method!r}")
    return model, doc


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d.pop("workers", None)
    return TrainConfig(**d)
