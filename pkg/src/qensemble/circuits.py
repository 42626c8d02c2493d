"""Parameterized classifier circuits.

Every circuit is a stack of blocks. A block applies one ``rot3`` to each qubit
and then an entangling CNOT pattern. Core-classifier variants differ only in
their CNOT topology; the OneVsAll circuit is ring-entangled and reads out a
single qubit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .statevector import (
    GateOp,
    NoiseModel,
    check_features,
    mixed_expect_z,
    pure_expect_z,
    run_mixed,
    run_pure,
    sample_expectation,
)

NUM_QUBITS = 5
DEFAULT_BLOCKS = 6

Pattern = tuple[tuple[int, int], ...]


def _chain(n):
    return tuple((q, q + 1) for q in range(n - 1))


def _ring(n):
    return _chain(n) + ((n - 1, 0),)


def _reverse_chain(n):
    return tuple((q + 1, q) for q in reversed(range(n - 1)))


def variant_patterns(variant_id: str, num_blocks: int, num_qubits: int = NUM_QUBITS) -> tuple[Pattern, ...]:
    """CNOT pattern for each block of a catalog variant."""
    n = num_qubits
    if variant_id == "V1":
        block = _chain(n)
    elif variant_id == "V2":
        block = _ring(n)
    elif variant_id == "V3":
        block = _ring(n) + ((0, 2), (2, 4))
    elif variant_id == "V4":
        block = tuple((0, k) for k in range(1, n))
    elif variant_id == "V5":
        # alternates between ring + reverse chain and the plain ring
        return tuple(
            _ring(n) + _reverse_chain(n) if b % 2 == 0 else _ring(n) for b in range(num_blocks)
        )
    else:
        raise ValueError(f"unknown variant {variant_id!r}; expected one of {VARIANT_IDS}")
    return (block,) * num_blocks


VARIANT_IDS = ("V1", "V2", "V3", "V4", "V5")
ONEVSALL_ID = "OVA"


@dataclass(frozen=True)
class CircuitSpec:
    variant_id: str
    num_qubits: int
    patterns: tuple[Pattern, ...]
    readout: tuple[int, ...]
    gates: tuple[GateOp, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.patterns:
            raise ValueError("a circuit needs at least one block")
        for pattern in self.patterns:
            if len(set(pattern)) != len(pattern):
                raise ValueError("duplicate CNOT pair within a block")
            for c, t in pattern:
                if c == t or not (0 <= c < self.num_qubits and 0 <= t < self.num_qubits):
                    raise ValueError(f"invalid CNOT pair ({c}, {t})")
        if not self.readout or any(not 0 <= q < self.num_qubits for q in self.readout):
            raise ValueError("invalid readout set")
        gates = []
        for b, pattern in enumerate(self.patterns):
            base = 3 * self.num_qubits * b
            for q in range(self.num_qubits):
                s = base + 3 * q
                gates.append(GateOp.rot3(q, slots=(s, s + 1, s + 2)))
            gates.extend(GateOp.cnot(c, t) for c, t in pattern)
        object.__setattr__(self, "gates", tuple(gates))

    @property
    def num_blocks(self) -> int:
        return len(self.patterns)

    @property
    def num_params(self) -> int:
        return 3 * self.num_qubits * self.num_blocks

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def to_dict(self) -> dict:
        return {
            "variant_id": self.variant_id,
            "num_qubits": self.num_qubits,
            "patterns": [[list(p) for p in block] for block in self.patterns],
            "readout": list(self.readout),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitSpec":
        return cls(
            variant_id=d["variant_id"],
            num_qubits=int(d["num_qubits"]),
            patterns=tuple(tuple((int(c), int(t)) for c, t in block) for block in d["patterns"]),
            readout=tuple(int(q) for q in d["readout"]),
        )


def build_core_variant(variant_id: str, num_blocks: int = DEFAULT_BLOCKS,
                       num_qubits: int = NUM_QUBITS) -> CircuitSpec:
    """Core classifier of the given catalog variant; reads out every qubit."""
    if num_blocks < 1:
        raise ValueError("num_blocks must be >= 1")
    patterns = variant_patterns(variant_id, num_blocks, num_qubits)
    return CircuitSpec(variant_id, num_qubits, patterns, tuple(range(num_qubits)))


def build_onevsall(num_blocks: int = DEFAULT_BLOCKS, num_qubits: int = NUM_QUBITS) -> CircuitSpec:
    """Ring-entangled binary circuit measuring only qubit 0."""
    if num_blocks < 1:
        raise ValueError("num_blocks must be >= 1")
    return CircuitSpec(ONEVSALL_ID, num_qubits, (_ring(num_qubits),) * num_blocks, (0,))


def evaluate(
    spec: CircuitSpec,
    params,
    features,
    noise: NoiseModel | None = None,
    readout: Sequence[int] | None = None,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-qubit ``<Z>`` after embedding ``features`` and running the circuit.

    ``features`` may be one vector (returns shape (R,)) or a (B, 2**n) matrix
    (returns (B, R)). ``params`` is (P,) or, for batched gradient work,
    (B, P). ``noise=None`` runs the pure backend; any :class:`NoiseModel`,
    including the zero one, runs the density-matrix backend.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != spec.num_params:
        raise ValueError(f"expected {spec.num_params} parameters, got {params.shape[-1]}")
    features = check_features(features, spec.num_qubits)
    single = features.ndim == 1
    feats = features[None] if single else features
    if params.ndim == 2 and params.shape[0] != feats.shape[0]:
        raise ValueError("per-row parameters must match the feature batch")
    readout = spec.readout if readout is None else tuple(readout)
    if any(not 0 <= q < spec.num_qubits for q in readout):
        raise ValueError("readout qubit out of range")

    if noise is None:
        states = run_pure(spec.gates, spec.num_qubits, params, feats)
        out = np.stack([pure_expect_z(states, q, spec.num_qubits) for q in readout], axis=1)
    else:
        if params.ndim != 1:
            raise ValueError("noisy evaluation takes a single parameter vector")
        rhos = run_mixed(spec.gates, spec.num_qubits, params, feats, noise)
        out = np.stack([mixed_expect_z(rhos, q, spec.num_qubits) for q in readout], axis=1)
    out = np.clip(out, -1.0, 1.0)
    if shots:
        if rng is None:
            raise ValueError("shot sampling needs an explicit generator")
        out = sample_expectation(out, shots, rng)
    return out[0] if single else out
