"""Ensemble decision rules.

The main model combines five core classifiers with accuracy-weighted bitwise
voting. When the weakest bit of a sample is less confident than ``gamma``,
the two OneVsAll classifiers of the two candidate classes arbitrate that bit.
OneVsOne and plain majority-vote ensembles are provided as baselines.

All prediction functions are batched: ``features`` is (B, 2**n). Single
sample helpers accept a 1-D vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .circuits import CircuitSpec, evaluate
from .errors import ConfigurationError
from .statevector import NoiseModel

NUM_CORES = 5
GAMMA_FRACTION = 0.10


def sgn(x) -> np.ndarray:
    """Sign with ``sgn(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def decode_bits(signs) -> int | np.ndarray:
    """Class index from MSB-first signs: bit b contributes ``2**(n-1-b)`` when positive.

    A 1-D input returns an int, a (B, n) input an int array.
    """
    signs = np.asarray(signs, dtype=np.float64)
    single = signs.ndim == 1
    s = np.atleast_2d(signs)
    n = s.shape[1]
    weights = 1 << np.arange(n - 1, -1, -1)
    classes = ((sgn(s) + 1) // 2).astype(np.int64) @ weights
    return int(classes[0]) if single else classes


@dataclass
class EvalCounter:
    """Circuit-evaluation bookkeeping, mergeable across workers."""

    circuit_evals: int = 0
    ova_evals: int = 0
    flagged: int = 0
    samples: int = 0

    def merge(self, other: "EvalCounter") -> "EvalCounter":
        return EvalCounter(
            self.circuit_evals + other.circuit_evals,
            self.ova_evals + other.ova_evals,
            self.flagged + other.flagged,
            self.samples + other.samples,
        )


@dataclass
class ClassifierModel:
    """A circuit with trained parameters.

    ``role`` is ``"core"``, ``"ova"`` (``target = (c,)``) or ``"ovo"``
    (``target = (a, b)``, output < 0 votes for ``a``).
    """

    spec: CircuitSpec
    params: np.ndarray
    accuracy_weight: float = 1.0
    role: str = "core"
    target: tuple[int, ...] = ()
    best_loss: float = float("nan")

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.num_params,):
            raise ValueError(
                f"{self.spec.variant_id}: expected {self.spec.num_params} params, got {self.params.shape}"
            )
        if not 0.0 <= self.accuracy_weight <= 1.0:
            raise ValueError("accuracy_weight must lie in [0, 1]")
        if self.role not in ("core", "ova", "ovo"):
            raise ValueError(f"unknown role {self.role!r}")
        self.target = tuple(int(t) for t in self.target)

    @property
    def name(self) -> str:
        if self.role == "core":
            return self.spec.variant_id
        return f"{self.role}:" + "-".join(map(str, self.target))

    def outputs(self, features, noise: NoiseModel | None = None, rng=None, shots=None,
                counter: EvalCounter | None = None) -> np.ndarray:
        feats = np.atleast_2d(features)
        if counter is not None:
            counter.circuit_evals += feats.shape[0]
        return evaluate(self.spec, self.params, feats, noise=noise, shots=shots, rng=rng)


@dataclass
class BitConfidence:
    sums: np.ndarray  # (B, n) weighted bit sums in [-1, 1]
    flagged: np.ndarray  # (B,) min |sum| < gamma
    weakest: np.ndarray  # (B,) argmin |sum|

    @property
    def min_confidence(self) -> np.ndarray:
        return np.abs(self.sums).min(axis=1)


def combine(outputs, weights) -> np.ndarray:
    """Accuracy-weighted average over members: (E, B, n) x (E,) -> (B, n)."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise ConfigurationError("ensemble accuracy weights sum to zero")
    return np.tensordot(weights / total, np.asarray(outputs), axes=1)


def confidence(sums, gamma: float) -> BitConfidence:
    sums = np.atleast_2d(sums)
    mags = np.abs(sums)
    return BitConfidence(sums, mags.min(axis=1) < gamma, mags.argmin(axis=1))


def weighted_bit_vote(cores: Sequence[ClassifierModel], features, num_bits: int, gamma: float = 0.0,
                      noise=None, rng=None, shots=None, counter=None) -> BitConfidence:
    """Evaluate every core and form per-bit weighted sums over its first ``num_bits`` outputs."""
    outs = [m.outputs(features, noise, rng, shots, counter)[:, :num_bits] for m in cores]
    return confidence(combine(outs, [m.accuracy_weight for m in cores]), gamma)


def arbitrate(voted_sign, c1_out, c2_out) -> np.ndarray:
    """Two-classifier agreement rule for one bit.

    ``c1_out`` belongs to the candidate with the bit at 0, ``c2_out`` to the
    one with the bit at 1; negative output means "in class". The bit changes
    only when exactly one of the two claims membership.
    """
    c1, c2 = np.asarray(c1_out), np.asarray(c2_out)
    out = np.array(voted_sign, dtype=np.float64, copy=True)
    out = np.where((c1 < 0) & (c2 > 0), -1.0, out)
    out = np.where((c1 > 0) & (c2 < 0), 1.0, out)
    return out


@dataclass
class EnsembleModel:
    cores: list[ClassifierModel]
    ova: list[ClassifierModel]  # indexed by task class
    gamma: float
    num_bits: int

    def __post_init__(self):
        if len(self.cores) != NUM_CORES:
            raise ConfigurationError(f"expected {NUM_CORES} core classifiers, got {len(self.cores)}")
        if len({m.spec.variant_id for m in self.cores}) != NUM_CORES:
            raise ConfigurationError("core classifiers must be distinct variants")
        if len(self.ova) != 1 << self.num_bits:
            raise ConfigurationError(f"expected {1 << self.num_bits} OneVsAll classifiers")
        for c, m in enumerate(self.ova):
            if m.role != "ova" or m.target != (c,):
                raise ConfigurationError(f"OneVsAll slot {c} holds {m.name}")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative")

    @property
    def num_classes(self) -> int:
        return 1 << self.num_bits

    @property
    def models(self) -> list[ClassifierModel]:
        return list(self.cores) + list(self.ova)

    def vote(self, features, noise=None, rng=None, shots=None, counter=None, gamma=None) -> BitConfidence:
        g = self.gamma if gamma is None else gamma
        return weighted_bit_vote(self.cores, features, self.num_bits, g, noise, rng, shots, counter)

    def predict(self, features, noise=None, rng=None, shots=None, counter=None, gamma=None) -> np.ndarray:
        return predict(self, features, noise, rng, shots, counter, gamma)


def error_correct(ens: EnsembleModel, conf: BitConfidence, features, noise=None, rng=None,
                  shots=None, counter: EvalCounter | None = None) -> np.ndarray:
    """Voted signs with the weakest bit of each flagged row arbitrated.

    Only the weakest bit of a flagged row can change; unflagged rows keep
    their voted signs.
    """
    feats = np.atleast_2d(features)
    signs = sgn(conf.sums).copy()
    rows = np.flatnonzero(conf.flagged)
    if rows.size == 0:
        return signs
    n = ens.num_bits
    weak = conf.weakest[rows]
    bit_weight = 1 << (n - 1 - weak)
    base = decode_bits(signs[rows]) & ~bit_weight
    cand0, cand1 = base, base | bit_weight
    c1 = np.empty(rows.size)
    c2 = np.empty(rows.size)
    for cls in np.unique(np.concatenate([cand0, cand1])):
        need0, need1 = cand0 == cls, cand1 == cls
        need = need0 | need1
        out = ens.ova[cls].outputs(feats[rows[need]], noise, rng, shots, counter)[:, 0]
        if counter is not None:
            counter.ova_evals += int(need.sum())
        full = np.zeros(rows.size)
        full[need] = out
        c1[need0] = full[need0]
        c2[need1] = full[need1]
    signs[rows, weak] = arbitrate(signs[rows, weak], c1, c2)
    return signs


def predict(ens: EnsembleModel, features, noise=None, rng=None, shots=None,
            counter: EvalCounter | None = None, gamma: float | None = None):
    """Vote, arbitrate flagged samples, decode. 1-D input returns an int."""
    single = np.asarray(features).ndim == 1
    feats = np.atleast_2d(features)
    conf = ens.vote(feats, noise, rng, shots, counter, gamma)
    if counter is not None:
        counter.samples += feats.shape[0]
        counter.flagged += int(conf.flagged.sum())
    signs = error_correct(ens, conf, feats, noise, rng, shots, counter)
    classes = decode_bits(signs)
    return int(classes[0]) if single else classes


def gamma_from_confidences(min_conf, fraction: float = GAMMA_FRACTION) -> float:
    """Threshold putting about ``fraction`` of the values strictly below it.

    With sorted values ``s`` and ``k = round(fraction * N)``, gamma is the
    midpoint between ``s[k]`` and the largest value strictly below it (or
    ``s[k] / 2`` when there is none).
    """
    vals = np.sort(np.asarray(min_conf, dtype=np.float64).ravel())
    if vals.size == 0:
        raise ValueError("no calibration samples")
    if vals.size < 10:
        raise ValueError(f"need at least 10 calibration samples, got {vals.size}")
    k = min(int(np.floor(fraction * vals.size + 0.5)), vals.size - 1)
    top = vals[k]
    below = vals[vals < top]
    if below.size == 0:
        return float(top / 2)
    return float(0.5 * (below[-1] + top))


def calibrate_gamma(ens_or_cores, features, num_bits: int | None = None,
                    fraction: float = GAMMA_FRACTION) -> float:
    """Gamma flagging ~10% of ``features`` by their minimum per-bit confidence."""
    if isinstance(ens_or_cores, EnsembleModel):
        cores, num_bits = ens_or_cores.cores, ens_or_cores.num_bits
    else:
        cores = ens_or_cores
    feats = np.atleast_2d(features)
    if feats.shape[0] == 0:
        raise ValueError("no calibration samples")
    conf = weighted_bit_vote(cores, feats, num_bits, 0.0)
    return gamma_from_confidences(conf.min_confidence, fraction)


# -- baselines -------------------------------------------------------------


@dataclass
class OneVsOneModel:
    models: list[ClassifierModel]
    num_classes: int
    _lookup: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._lookup = {m.target: m for m in self.models}
        missing = [p for p in combinations(range(self.num_classes), 2) if p not in self._lookup]
        if missing:
            raise ConfigurationError(f"OneVsOne is missing pair models {missing}")

    def predict(self, features, noise=None, rng=None, shots=None, counter=None, gamma=None):
        return predict_onevsone(self.models, features, self.num_classes, noise, rng, shots, counter)


def predict_onevsone(models: Sequence[ClassifierModel], features, num_classes: int,
                     noise=None, rng=None, shots=None, counter=None):
    """Plurality vote of pair classifiers; ties go to the lowest class index."""
    single = np.asarray(features).ndim == 1
    feats = np.atleast_2d(features)
    lookup = {m.target: m for m in models}
    votes = np.zeros((feats.shape[0], num_classes), dtype=np.int64)
    for a, b in combinations(range(num_classes), 2):
        if (a, b) not in lookup:
            raise ConfigurationError(f"OneVsOne is missing pair model {(a, b)}")
        out = lookup[(a, b)].outputs(feats, noise, rng, shots, counter)[:, 0]
        winner = np.where(sgn(out) < 0, a, b)
        votes[np.arange(feats.shape[0]), winner] += 1
    if counter is not None:
        counter.samples += feats.shape[0]
    classes = votes.argmax(axis=1)
    return int(classes[0]) if single else classes


@dataclass
class PlainEnsembleModel:
    members: list[ClassifierModel]
    num_bits: int

    @property
    def models(self) -> list[ClassifierModel]:
        return list(self.members)

    def predict(self, features, noise=None, rng=None, shots=None, counter=None, gamma=None):
        return predict_plain_ensemble(self.members, features, self.num_bits, noise, rng, shots, counter)


def predict_plain_ensemble(members: Sequence[ClassifierModel], features, num_bits: int,
                           noise=None, rng=None, shots=None, counter=None):
    """Unweighted per-bit majority of member signs, then decode."""
    single = np.asarray(features).ndim == 1
    feats = np.atleast_2d(features)
    tally = sum(sgn(m.outputs(feats, noise, rng, shots, counter)[:, :num_bits]) for m in members)
    if counter is not None:
        counter.samples += feats.shape[0]
    classes = decode_bits(sgn(tally))
    return int(classes[0]) if single else classes


def onevsone_count(num_classes: int) -> int:
    return num_classes * (num_classes - 1) // 2


def corrected_count(num_classes: int) -> int:
    return NUM_CORES + num_classes
