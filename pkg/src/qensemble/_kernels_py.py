"""Pure-numpy fallback for the compiled statevector kernels.

Same contracts as ``_kernels.pyx``: in-place updates of C-contiguous
``complex128`` arrays shaped ``(batch, 2**num_qubits)``, qubit 0 = MSB.
"""

import numpy as np


def apply_1q(states, qubit, num_qubits, mats):
    batch = states.shape[0]
    view = states.reshape(batch, 1 << qubit, 2, 1 << (num_qubits - 1 - qubit))
    if mats.shape[0] == 1:
        view[...] = np.einsum("ij,bajc->baic", mats[0], view)
    else:
        view[...] = np.einsum("bij,bajc->baic", mats, view)


def apply_cnot(states, control, target, num_qubits):
    dim = 1 << num_qubits
    cbit = 1 << (num_qubits - 1 - control)
    tbit = 1 << (num_qubits - 1 - target)
    idx = np.arange(dim)
    src = idx[(idx & cbit) != 0]
    states[:, src] = states[:, src ^ tbit]


def expect_z(states, qubit, num_qubits):
    batch = states.shape[0]
    probs = (states.real ** 2 + states.imag ** 2).reshape(
        batch, 1 << qubit, 2, 1 << (num_qubits - 1 - qubit)
    )
    return probs[:, :, 0, :].sum(axis=(1, 2)) - probs[:, :, 1, :].sum(axis=(1, 2))
