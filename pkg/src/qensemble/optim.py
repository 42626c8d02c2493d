"""Squared loss, parameter-shift gradients and Adam."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .circuits import CircuitSpec, evaluate

SHIFT = np.pi / 2
# rows of (sample x shifted-parameter) states pushed through the simulator at once
_MAX_ROWS = 8192


def loss(predictions, labels) -> float:
    """Sum over samples and output bits of ``(label - prediction)**2``."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    return float(np.sum((labels - predictions) ** 2))


def shifted_outputs(spec: CircuitSpec, params, features, readout) -> np.ndarray:
    """Outputs at ``params`` and at every +/- pi/2 single-angle shift.

    Returns (S, 2P + 1, R): index 0 is unshifted, ``1 + k`` is ``theta_k +
    pi/2`` and ``1 + P + k`` is ``theta_k - pi/2``.
    """
    params = np.asarray(params, dtype=np.float64)
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    num_params = params.size
    eye = SHIFT * np.eye(num_params)
    table = np.vstack([params[None], params + eye, params - eye])
    rows = table.shape[0]
    num_samples = features.shape[0]
    out = np.empty((num_samples, rows, len(readout)))
    chunk = max(1, _MAX_ROWS // rows)
    for start in range(0, num_samples, chunk):
        feats = features[start:start + chunk]
        n = feats.shape[0]
        res = evaluate(
            spec,
            np.tile(table, (n, 1)),
            np.repeat(feats, rows, axis=0),
            readout=readout,
        )
        out[start:start + n] = res.reshape(n, rows, len(readout))
    return out


def loss_and_grad(spec: CircuitSpec, params, features, labels, readout: Sequence[int]):
    """Batch loss, its exact gradient and the unshifted predictions.

    Each rot3 angle drives a single Pauli rotation, so the two-point shift
    rule ``(f(theta + pi/2) - f(theta - pi/2)) / 2`` is exact per angle.
    Always evaluated on the noise-free backend.
    """
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    outs = shifted_outputs(spec, params, features, tuple(readout))
    num_params = np.asarray(params).size
    preds = outs[:, 0, :]
    if preds.shape != labels.shape:
        raise ValueError(f"labels shape {labels.shape} does not match outputs {preds.shape}")
    d_out = 0.5 * (outs[:, 1:1 + num_params, :] - outs[:, 1 + num_params:, :])
    residual = labels - preds
    grad = -2.0 * np.einsum("sr,skr->k", residual, d_out)
    return loss(preds, labels), grad, preds


def parameter_shift_grad(spec: CircuitSpec, params, features, labels, readout: Sequence[int]) -> np.ndarray:
    """Gradient of the squared batch loss with respect to ``params``."""
    return loss_and_grad(spec, params, features, labels, readout)[1]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, num_params: int, lr: float = 0.05, **kw) -> "AdamState":
        return cls(np.zeros(num_params), np.zeros(num_params), lr=lr, **kw)


def adam_step(state: AdamState, params, grad) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; inputs are not mutated."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (params.shape == grad.shape == state.m.shape):
        raise ValueError("params, gradient and optimizer state lengths differ")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new_params
