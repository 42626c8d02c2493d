# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector kernels.

All routines operate in place on C-contiguous ``complex128`` arrays of shape
``(batch, 2**num_qubits)``. Qubit 0 is the most significant bit of the basis
index.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_1q(double complex[:, ::1] states, Py_ssize_t qubit, Py_ssize_t num_qubits,
             double complex[:, :, ::1] mats):
    """Apply a 2x2 gate to ``qubit`` of every row.

    ``mats`` has shape (1, 2, 2) for a shared gate or (batch, 2, 2) for a
    per-row gate.
    """
    cdef Py_ssize_t batch = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t stride = (<Py_ssize_t>1) << (num_qubits - 1 - qubit)
    cdef Py_ssize_t per_row = mats.shape[0] > 1
    cdef Py_ssize_t b, i, j, m
    cdef double complex m00, m01, m10, m11, a0, a1
    with nogil:
        for b in range(batch):
            m = b if per_row else 0
            m00 = mats[m, 0, 0]
            m01 = mats[m, 0, 1]
            m10 = mats[m, 1, 0]
            m11 = mats[m, 1, 1]
            for i in range(dim):
                if i & stride:
                    continue
                j = i | stride
                a0 = states[b, i]
                a1 = states[b, j]
                states[b, i] = m00 * a0 + m01 * a1
                states[b, j] = m10 * a0 + m11 * a1


def apply_cnot(double complex[:, ::1] states, Py_ssize_t control, Py_ssize_t target,
               Py_ssize_t num_qubits):
    """Apply CNOT(control -> target) to every row."""
    cdef Py_ssize_t batch = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t cbit = (<Py_ssize_t>1) << (num_qubits - 1 - control)
    cdef Py_ssize_t tbit = (<Py_ssize_t>1) << (num_qubits - 1 - target)
    cdef Py_ssize_t b, i, j
    cdef double complex tmp
    with nogil:
        for b in range(batch):
            for i in range(dim):
                if (i & cbit) and not (i & tbit):
                    j = i | tbit
                    tmp = states[b, i]
                    states[b, i] = states[b, j]
                    states[b, j] = tmp


def expect_z(double complex[:, ::1] states, Py_ssize_t qubit, Py_ssize_t num_qubits):
    """Return <Z_qubit> for every row as a float64 array."""
    cdef Py_ssize_t batch = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t bit = (<Py_ssize_t>1) << (num_qubits - 1 - qubit)
    cdef Py_ssize_t b, i
    cdef double acc, p
    cdef double complex a
    out = np.empty(batch, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for b in range(batch):
            acc = 0.0
            for i in range(dim):
                a = states[b, i]
                p = a.real * a.real + a.imag * a.imag
                if i & bit:
                    acc -= p
                else:
                    acc += p
            res[b] = acc
    return out
