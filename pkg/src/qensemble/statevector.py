"""Exact simulation of small qubit registers.

Two representations are supported: pure states (complex vectors of length
``2**n``) for noise-free runs, and density matrices (``2**n x 2**n``) for runs
with gate-attached depolarizing noise. Qubit 0 is the most significant bit of
a basis index, so ``|10>`` is index 2 on two qubits.

The single-state functions (:func:`ground_state`, :func:`apply_gate`, ...)
mirror the textbook operations. Circuit evaluation goes through the batched
runners :func:`run_pure` and :func:`run_mixed`, which push whole batches of
samples (and, for gradients, whole batches of parameter vectors) through the
compiled kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

MAX_QUBITS = 12
NORM_TOL = 1e-9


@dataclass(frozen=True)
class GateOp:
    """One gate in a circuit.

    ``kind`` is ``"rot3"`` (one target qubit, three angles) or ``"cnot"``
    (control, target). A rot3 angle is either trainable, in which case
    ``slots`` holds its index into the parameter vector, or fixed, in which
    case the slot is ``None`` and ``values`` holds the literal angle.
    """

    kind: str
    qubits: tuple[int, ...]
    slots: tuple[int | None, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "rot3":
            if len(self.qubits) != 1:
                raise ValueError("rot3 acts on exactly one qubit")
            if len(self.slots) != 3 or len(self.values) != 3:
                raise ValueError("rot3 needs three slots and three values")
        elif self.kind == "cnot":
            if len(self.qubits) != 2:
                raise ValueError("cnot needs (control, target)")
            if self.qubits[0] == self.qubits[1]:
                raise ValueError("cnot control and target must differ")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if any(q < 0 for q in self.qubits):
            raise ValueError("negative qubit index")

    @classmethod
    def rot3(cls, qubit, slots=(None, None, None), values=(0.0, 0.0, 0.0)):
        return cls("rot3", (int(qubit),), tuple(slots), tuple(float(v) for v in values))

    @classmethod
    def cnot(cls, control, target):
        return cls("cnot", (int(control), int(target)))

    def angles(self, params) -> np.ndarray:
        """Resolve the three angles against ``params`` of shape (P,) or (B, P).

        Returns shape (3,) or (B, 3).
        """
        params = np.asarray(params, dtype=np.float64)
        if params.ndim == 1:
            return np.array(
                [params[s] if s is not None else v for s, v in zip(self.slots, self.values)]
            )
        cols = [
            params[:, s] if s is not None else np.full(params.shape[0], v)
            for s, v in zip(self.slots, self.values)
        ]
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric depolarizing probabilities for 1- and 2-qubit gates."""

    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    def for_gate(self, gate: GateOp) -> float:
        return self.p1 if len(gate.qubits) == 1 else self.p2


NOISELESS = NoiseModel(0.0, 0.0)


@dataclass
class QuantumState:
    """A register state: a vector (pure) or a density matrix (mixed)."""

    num_qubits: int
    data: np.ndarray = field(repr=False)

    @property
    def is_mixed(self) -> bool:
        return self.data.ndim == 2

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def norm(self) -> float:
        if self.is_mixed:
            return float(np.trace(self.data).real)
        return float(np.vdot(self.data, self.data).real)

    def to_density(self) -> "QuantumState":
        if self.is_mixed:
            return QuantumState(self.num_qubits, self.data.copy())
        return QuantumState(self.num_qubits, np.outer(self.data, self.data.conj()))


def rz(theta):
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = np.exp(-0.5j * theta)
    out[..., 1, 1] = np.exp(0.5j * theta)
    return out


def ry(theta):
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    out = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rot3_matrix(theta1, theta2, theta3) -> np.ndarray:
    """Matrix of ``Rz(theta1) @ Ry(theta2) @ Rz(theta3)``; broadcasts over angle arrays."""
    a = np.asarray(theta1, dtype=np.float64)
    b = np.asarray(theta2, dtype=np.float64)
    c = np.asarray(theta3, dtype=np.float64)
    a, b, c = np.broadcast_arrays(a, b, c)
    cos, sin = np.cos(0.5 * b), np.sin(0.5 * b)
    plus, minus = 0.5 * (a + c), 0.5 * (a - c)
    out = np.empty(a.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = np.exp(-1j * plus) * cos
    out[..., 0, 1] = -np.exp(-1j * minus) * sin
    out[..., 1, 0] = np.exp(1j * minus) * sin
    out[..., 1, 1] = np.exp(1j * plus) * cos
    return out


CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)


def _check_qubits(num_qubits, qubits):
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")


def ground_state(num_qubits: int) -> QuantumState:
    """Return ``|0...0>`` as a pure state."""
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    vec = np.zeros(1 << num_qubits, dtype=np.complex128)
    vec[0] = 1.0
    return QuantumState(int(num_qubits), vec)


def check_features(features, num_qubits) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    dim = 1 << num_qubits
    if features.shape[-1] != dim:
        raise ValueError(f"expected {dim} features, got {features.shape[-1]}")
    norms = np.linalg.norm(features, axis=-1)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ValueError("features must be L2-normalized")
    return features


def amplitude_embed(state: QuantumState, features) -> QuantumState:
    """Load normalized ``features`` as the amplitudes of a fresh register.

    ``state`` must be the ground state; the result is pure, or mixed when the
    input was a density matrix.
    """
    features = check_features(features, state.num_qubits)
    if features.ndim != 1:
        raise ValueError("amplitude_embed takes a single feature vector")
    ground = ground_state(state.num_qubits)
    ref = ground.to_density().data if state.is_mixed else ground.data
    if not np.allclose(state.data, ref, atol=1e-12):
        raise ValueError("amplitude embedding requires the ground state")
    vec = features.astype(np.complex128)
    if state.is_mixed:
        return QuantumState(state.num_qubits, np.outer(vec, vec.conj()))
    return QuantumState(state.num_qubits, vec)


def gate_matrix(gate: GateOp, params=None) -> np.ndarray:
    """Dense matrix of ``gate`` on its own support (2x2 or 4x4)."""
    if gate.kind == "cnot":
        return CNOT_MATRIX.copy()
    params = np.zeros(0) if params is None else params
    return rot3_matrix(*gate.angles(params))


def _depolarize_qubit(rhos: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Replace ``qubit`` by I/2: returns ``Tr_q(rho) (x) I/2`` for every batch row."""
    batch = rhos.shape[0]
    left, right = 1 << qubit, 1 << (num_qubits - 1 - qubit)
    view = rhos.reshape(batch, left, 2, right, left, 2, right)
    traced = view[:, :, 0, :, :, 0, :] + view[:, :, 1, :, :, 1, :]
    out = np.zeros_like(view)
    out[:, :, 0, :, :, 0, :] = 0.5 * traced
    out[:, :, 1, :, :, 1, :] = 0.5 * traced
    return out.reshape(rhos.shape)


def depolarize(rhos: np.ndarray, qubits: Sequence[int], p: float, num_qubits: int) -> np.ndarray:
    """Apply ``(1-p) rho + p (Tr_S(rho) (x) I_S / 2^|S|)`` on support ``qubits``."""
    if p == 0.0:
        return rhos
    replaced = rhos
    for q in qubits:
        replaced = _depolarize_qubit(replaced, q, num_qubits)
    return (1.0 - p) * rhos + p * replaced


def _apply_pure(states, gate, mats, num_qubits):
    if gate.kind == "cnot":
        kernels.apply_cnot(states, gate.qubits[0], gate.qubits[1], num_qubits)
    else:
        kernels.apply_1q(states, gate.qubits[0], num_qubits, mats)


def _apply_mixed(rhos, gate, mats, num_qubits):
    """Conjugate every density matrix in ``rhos`` (B, D, D) by the gate, in place."""
    batch, dim, _ = rhos.shape
    rows = rhos.reshape(batch * dim, dim)
    # kernels act on the last axis: row-wise application of M computes rho @ M.T
    if gate.kind == "cnot":
        _apply_pure(rows, gate, None, num_qubits)
        flipped = np.ascontiguousarray(rhos.transpose(0, 2, 1))
        _apply_pure(flipped.reshape(batch * dim, dim), gate, None, num_qubits)
    else:
        conj = np.ascontiguousarray(np.conj(mats))
        if conj.shape[0] > 1:
            conj = np.repeat(conj, dim, axis=0)
            mats = np.repeat(mats, dim, axis=0)
        _apply_pure(rows, gate, conj, num_qubits)
        flipped = np.ascontiguousarray(rhos.transpose(0, 2, 1))
        _apply_pure(flipped.reshape(batch * dim, dim), gate, np.ascontiguousarray(mats), num_qubits)
    rhos[...] = flipped.transpose(0, 2, 1)


def apply_gate(
    state: QuantumState, gate: GateOp, params=None, noise: NoiseModel | None = None
) -> QuantumState:
    """Return the state after ``gate``; noise applies only to mixed states."""
    _check_qubits(state.num_qubits, gate.qubits)
    mats = None
    if gate.kind == "rot3":
        if params is None:
            params = np.zeros(0)
        if any(s is not None and not 0 <= s < len(params) for s in gate.slots):
            raise ValueError("gate parameter slot not resolvable")
        mats = gate_matrix(gate, params)[None]
    if state.is_mixed:
        rhos = np.ascontiguousarray(state.data, dtype=np.complex128)[None].copy()
        _apply_mixed(rhos, gate, mats, state.num_qubits)
        if noise is not None:
            rhos = depolarize(rhos, gate.qubits, noise.for_gate(gate), state.num_qubits)
        return QuantumState(state.num_qubits, rhos[0])
    states = np.array(state.data, dtype=np.complex128, copy=True)[None]
    _apply_pure(states, gate, mats, state.num_qubits)
    return QuantumState(state.num_qubits, states[0])


def sample_expectation(exact, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Binomial shot estimate of Z expectations from their exact values."""
    p0 = np.clip(0.5 * (1.0 + np.asarray(exact)), 0.0, 1.0)
    return 2.0 * rng.binomial(shots, p0) / shots - 1.0


def expect_z(state: QuantumState, qubit: int, shots: int | None = None, rng=None) -> float:
    """``<Z_qubit>``; exact unless ``shots`` is given, in which case ``rng`` is required."""
    _check_qubits(state.num_qubits, (qubit,))
    if state.is_mixed:
        value = float(mixed_expect_z(state.data[None], qubit, state.num_qubits)[0])
    else:
        vec = np.ascontiguousarray(state.data, dtype=np.complex128)[None]
        value = float(kernels.expect_z(vec, qubit, state.num_qubits)[0])
    if shots:
        if rng is None:
            raise ValueError("shot sampling needs an explicit generator")
        value = float(sample_expectation(value, shots, rng))
    return value


def mixed_expect_z(rhos: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    diag = np.einsum("bii->bi", rhos).real
    bit = 1 << (num_qubits - 1 - qubit)
    signs = np.where(np.arange(1 << num_qubits) & bit, -1.0, 1.0)
    return diag @ signs


def _rot3_mats(gate, params):
    angles = gate.angles(params)
    if angles.ndim == 1:
        return rot3_matrix(*angles)[None]
    return np.ascontiguousarray(rot3_matrix(angles[:, 0], angles[:, 1], angles[:, 2]))


def run_pure(gates: Sequence[GateOp], num_qubits: int, params, features) -> np.ndarray:
    """Embed each feature row and apply ``gates``; returns (B, 2**n) amplitudes.

    ``params`` is (P,) shared by all rows or (B, P) with one vector per row.
    """
    states = np.ascontiguousarray(features, dtype=np.complex128)
    if states.ndim == 1:
        states = states[None]
    states = states.copy()
    params = np.asarray(params, dtype=np.float64)
    for gate in gates:
        mats = _rot3_mats(gate, params) if gate.kind == "rot3" else None
        _apply_pure(states, gate, mats, num_qubits)
    return states


def run_mixed(
    gates: Sequence[GateOp], num_qubits: int, params, features, noise: NoiseModel
) -> np.ndarray:
    """Density-matrix counterpart of :func:`run_pure`; returns (B, D, D)."""
    vecs = np.asarray(features, dtype=np.complex128)
    if vecs.ndim == 1:
        vecs = vecs[None]
    rhos = np.ascontiguousarray(np.einsum("bi,bj->bij", vecs, vecs.conj()))
    params = np.asarray(params, dtype=np.float64)
    for gate in gates:
        mats = _rot3_mats(gate, params) if gate.kind == "rot3" else None
        _apply_mixed(rhos, gate, mats, num_qubits)
        p = noise.for_gate(gate)
        if p:
            rhos = np.ascontiguousarray(depolarize(rhos, gate.qubits, p, num_qubits))
    return rhos


def pure_expect_z(states: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    return kernels.expect_z(states, qubit, num_qubits)
