"""Gate kernels on dense amplitude arrays.

All kernels work in place.  Batches of states are stored as ``(K, 2**n)``
C-contiguous complex128 arrays, one state per row.  Qubit ``q`` is bit ``q``
of the amplitude index (qubit 0 is the least-significant bit).

Two interchangeable backends are provided: ``nb_*`` (numba) and ``np_*``
(numpy reshapes).  The unprefixed names dispatch to one of them according to
:data:`qqm._accel.USE_NUMBA`.
"""
from functools import lru_cache

import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# numba backend


@njit(cache=True)
def nb_apply_1q(states, g, q):
    K, dim = states.shape
    s = 1 << q
    g00, g01, g10, g11 = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    for k in range(K):
        for base in range(0, dim, 2 * s):
            for i in range(base, base + s):
                a0 = states[k, i]
                a1 = states[k, i + s]
                states[k, i] = g00 * a0 + g01 * a1
                states[k, i + s] = g10 * a0 + g11 * a1


@njit(cache=True)
def nb_apply_1q_rows(states, gs, q):
    K, dim = states.shape
    s = 1 << q
    for k in range(K):
        g00, g01, g10, g11 = gs[k, 0, 0], gs[k, 0, 1], gs[k, 1, 0], gs[k, 1, 1]
        for base in range(0, dim, 2 * s):
            for i in range(base, base + s):
                a0 = states[k, i]
                a1 = states[k, i + s]
                states[k, i] = g00 * a0 + g01 * a1
                states[k, i + s] = g10 * a0 + g11 * a1


@njit(cache=True)
def nb_apply_cnot(states, c, t):
    K, dim = states.shape
    cm = 1 << c
    tm = 1 << t
    for k in range(K):
        for i in range(dim):
            if (i & cm) and not (i & tm):
                j = i | tm
                tmp = states[k, i]
                states[k, i] = states[k, j]
                states[k, j] = tmp


@njit(cache=True)
def nb_conjugate_1q(a, g, q):
    dim = a.shape[0]
    s = 1 << q
    g00, g01, g10, g11 = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    h00, h01, h10, h11 = np.conj(g00), np.conj(g01), np.conj(g10), np.conj(g11)
    for base in range(0, dim, 2 * s):
        for i in range(base, base + s):
            for j in range(dim):
                a0 = a[i, j]
                a1 = a[i + s, j]
                a[i, j] = g00 * a0 + g01 * a1
                a[i + s, j] = g10 * a0 + g11 * a1
    for i in range(dim):
        for base in range(0, dim, 2 * s):
            for j in range(base, base + s):
                a0 = a[i, j]
                a1 = a[i, j + s]
                a[i, j] = a0 * h00 + a1 * h01
                a[i, j + s] = a0 * h10 + a1 * h11


@njit(cache=True)
def nb_conjugate_cnot(a, c, t):
    dim = a.shape[0]
    cm = 1 << c
    tm = 1 << t
    for i in range(dim):
        if (i & cm) and not (i & tm):
            j = i | tm
            for col in range(dim):
                tmp = a[i, col]
                a[i, col] = a[j, col]
                a[j, col] = tmp
    for row in range(dim):
        for i in range(dim):
            if (i & cm) and not (i & tm):
                j = i | tm
                tmp = a[row, i]
                a[row, i] = a[row, j]
                a[row, j] = tmp


@njit(cache=True)
def nb_trace_product(a, b):
    dim = a.shape[0]
    acc = 0.0
    for i in range(dim):
        for j in range(dim):
            x = a[i, j] * b[j, i]
            acc += x.real
    return acc


# --------------------------------------------------------------------------
# numpy backend


def np_apply_1q(states, g, q):
    K, dim = states.shape
    s = 1 << q
    v = states.reshape(K, dim // (2 * s), 2, s)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    v[:, :, 0, :] = g[0, 0] * a0 + g[0, 1] * a1
    v[:, :, 1, :] = g[1, 0] * a0 + g[1, 1] * a1


def np_apply_1q_rows(states, gs, q):
    K, dim = states.shape
    s = 1 << q
    v = states.reshape(K, dim // (2 * s), 2, s)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    g = gs[:, :, :, None, None]
    v[:, :, 0, :] = g[:, 0, 0] * a0 + g[:, 0, 1] * a1
    v[:, :, 1, :] = g[:, 1, 0] * a0 + g[:, 1, 1] * a1


@lru_cache(maxsize=None)
def _cnot_perm(dim, c, t):
    idx = np.arange(dim)
    flip = (idx >> c) & 1
    return idx ^ (flip << t)


def np_apply_cnot(states, c, t):
    perm = _cnot_perm(states.shape[1], c, t)
    states[:] = states[:, perm]


def np_conjugate_1q(a, g, q):
    dim = a.shape[0]
    s = 1 << q
    rows = a.reshape(dim // (2 * s), 2, s, dim)
    r0 = rows[:, 0].copy()
    r1 = rows[:, 1].copy()
    rows[:, 0] = g[0, 0] * r0 + g[0, 1] * r1
    rows[:, 1] = g[1, 0] * r0 + g[1, 1] * r1
    h = g.conj()
    cols = a.reshape(dim, dim // (2 * s), 2, s)
    c0 = cols[:, :, 0].copy()
    c1 = cols[:, :, 1].copy()
    cols[:, :, 0] = c0 * h[0, 0] + c1 * h[0, 1]
    cols[:, :, 1] = c0 * h[1, 0] + c1 * h[1, 1]


def np_conjugate_cnot(a, c, t):
    perm = _cnot_perm(a.shape[0], c, t)
    a[:] = a[perm][:, perm]


def np_trace_product(a, b):
    return float(np.sum(a * b.T).real)


if USE_NUMBA:
    apply_1q = nb_apply_1q
    apply_1q_rows = nb_apply_1q_rows
    apply_cnot = nb_apply_cnot
    conjugate_1q = nb_conjugate_1q
    conjugate_cnot = nb_conjugate_cnot
    trace_product = nb_trace_product
else:
    apply_1q = np_apply_1q
    apply_1q_rows = np_apply_1q_rows
    apply_cnot = np_apply_cnot
    conjugate_1q = np_conjugate_1q
    conjugate_cnot = np_conjugate_cnot
    trace_product = np_trace_product

BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# gate matrices


def rotation_matrix(axis, angle):
    """2x2 matrix of ``exp(-i angle P / 2)`` for ``P`` in X, Y, Z."""
    c = np.cos(angle / 2.0)
    s = np.sin(angle / 2.0)
    if axis == "X":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if axis == "Y":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if axis == "Z":
        return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]], dtype=np.complex128)
    raise ValueError(f"unknown rotation axis {axis!r}")


def rotation_matrices(axis, angles):
    """Stack of rotation matrices, shape ``(len(angles), 2, 2)``."""
    angles = np.asarray(angles, dtype=np.float64)
    c = np.cos(angles / 2.0)
    s = np.sin(angles / 2.0)
    out = np.zeros((angles.size, 2, 2), dtype=np.complex128)
    if axis == "X":
        out[:, 0, 0] = c
        out[:, 1, 1] = c
        out[:, 0, 1] = -1j * s
        out[:, 1, 0] = -1j * s
    elif axis == "Y":
        out[:, 0, 0] = c
        out[:, 1, 1] = c
        out[:, 0, 1] = -s
        out[:, 1, 0] = s
    elif axis == "Z":
        out[:, 0, 0] = c - 1j * s
        out[:, 1, 1] = c + 1j * s
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")
    return out
