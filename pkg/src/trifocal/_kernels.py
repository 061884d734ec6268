"""Jitted evaluation and path-tracking kernels.

All functions here operate on raw complex128 arrays; the extended parameter
layout appends the chart vectors after the packed instance data so that a
straight-line segment between two extended vectors keeps the charts constant:

* chicago (sys_id 0):   E[0:45] data, E[45:49] c2, E[49:53] c3
* cleveland (sys_id 1): E[0:36] data, E[36:40] c2, E[40:44] c3, E[44:47] cV

Index grids below are module-level int arrays so numba folds them into the
compiled code.
"""

import numpy as np
from numba import njit, prange

# path statuses
SUCCESS = 0
CORRECTOR_FAILURE = 1
MIN_STEP_REACHED = 2
MAX_STEPS_EXCEEDED = 3
SINGULAR_ENDPOINT = 4

# options-vector layout for the tracker kernels
OPT_DT0 = 0
OPT_DT_MIN = 1
OPT_DT_MAX = 2
OPT_MAX_CORR = 3
OPT_CORR_TOL = 4
OPT_GROW_EVERY = 5
OPT_GROWTH = 6
OPT_SHRINK = 7
OPT_MAX_STEPS = 8
OPT_POLISH = 9
OPT_ACCEPT = 10
N_OPTS = 11

# unknown-vector index grids (see systems.py for the layout contract)
_ALPHA_POS = np.array([[-1, 10, 13], [8, 11, 14], [9, 12, 15]], dtype=np.int64)
_EPS_POS = np.array([[16, 19], [17, 20], [18, 21]], dtype=np.int64)
_MU_POS = np.array([[-1, -1], [22, 24], [23, 25]], dtype=np.int64)


@njit(cache=True, nogil=True)
def _pq(q, P):
    """P(q): homogeneous quadratic rotation form, 3x3."""
    a, b, c, d = q[0], q[1], q[2], q[3]
    aa, bb, cc, dd = a * a, b * b, c * c, d * d
    P[0, 0] = aa + bb - cc - dd
    P[0, 1] = 2.0 * (b * c - a * d)
    P[0, 2] = 2.0 * (b * d + a * c)
    P[1, 0] = 2.0 * (b * c + a * d)
    P[1, 1] = aa - bb + cc - dd
    P[1, 2] = 2.0 * (c * d - a * b)
    P[2, 0] = 2.0 * (b * d - a * c)
    P[2, 1] = 2.0 * (c * d + a * b)
    P[2, 2] = aa - bb - cc + dd


@njit(cache=True, nogil=True)
def _pq_grad(q, w, G):
    """G[k, m] = d(P(q) w)_k / dq_m, 3x4."""
    a, b, c, d = q[0], q[1], q[2], q[3]
    w1, w2, w3 = w[0], w[1], w[2]
    G[0, 0] = 2.0 * (a * w1 - d * w2 + c * w3)
    G[0, 1] = 2.0 * (b * w1 + c * w2 + d * w3)
    G[0, 2] = 2.0 * (-c * w1 + b * w2 + a * w3)
    G[0, 3] = 2.0 * (-d * w1 - a * w2 + b * w3)
    G[1, 0] = 2.0 * (d * w1 + a * w2 - b * w3)
    G[1, 1] = 2.0 * (c * w1 - b * w2 - a * w3)
    G[1, 2] = 2.0 * (b * w1 + c * w2 + d * w3)
    G[1, 3] = 2.0 * (a * w1 - d * w2 + c * w3)
    G[2, 0] = 2.0 * (-c * w1 + b * w2 + a * w3)
    G[2, 1] = 2.0 * (d * w1 + a * w2 - b * w3)
    G[2, 2] = 2.0 * (-a * w1 + d * w2 - c * w3)
    G[2, 3] = 2.0 * (b * w1 + c * w2 + d * w3)


@njit(cache=True, nogil=True)
def _alpha_at(u, v, j):
    pos = _ALPHA_POS[v, j]
    if pos < 0:
        return 1.0 + 0.0j
    return u[pos]


# ---------------------------------------------------------------------------
# chicago
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def chicago_F(u, E, out):
    P = np.empty((3, 3), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * E[xo_1j + k] - a12 * E[18 + k]
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (avj * E[xo_vj + k] - av2 * E[xo_v2 + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )
            evj = u[_EPS_POS[v, j]]
            mvj = u[_MU_POS[v, j]]
            e1j = u[_EPS_POS[0, j]]
            do_vj = 27 + 3 * (3 * j + v)
            do_1j = 27 + 9 * j
            for k in range(3):
                w[k] = e1j * E[xo_1j + k] + E[do_1j + k]
            r = 12 + 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (evj * E[xo_vj + k] + mvj * E[do_vj + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )
    out[24] = E[45] * u[0] + E[46] * u[1] + E[47] * u[2] + E[48] * u[3] - 1.0
    out[25] = E[49] * u[4] + E[50] * u[5] + E[51] * u[6] + E[52] * u[7] - 1.0


@njit(cache=True, nogil=True)
def chicago_J(u, E, J):
    J[:, :] = 0.0
    P = np.empty((3, 3), dtype=np.complex128)
    G = np.empty((3, 4), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    y = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * E[xo_1j + k] - a12 * E[18 + k]
                y[k] = avj * E[xo_vj + k] - av2 * E[xo_v2 + k]
            _pq_grad(q, w, G)
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                for m in range(4):
                    J[r + k, qo + m] = 2.0 * q[m] * y[k] - G[k, m]
                J[r + k, _ALPHA_POS[v, j]] += qq * E[xo_vj + k]
                J[r + k, _ALPHA_POS[v, 2]] -= qq * E[xo_v2 + k]
                px12 = P[k, 0] * E[18] + P[k, 1] * E[19] + P[k, 2] * E[20]
                J[r + k, _ALPHA_POS[0, 2]] += px12
                if j == 1:
                    px1j = P[k, 0] * E[xo_1j] + P[k, 1] * E[xo_1j + 1] + P[k, 2] * E[xo_1j + 2]
                    J[r + k, _ALPHA_POS[0, 1]] -= px1j

            evj = u[_EPS_POS[v, j]]
            mvj = u[_MU_POS[v, j]]
            e1j = u[_EPS_POS[0, j]]
            do_vj = 27 + 3 * (3 * j + v)
            do_1j = 27 + 9 * j
            for k in range(3):
                w[k] = e1j * E[xo_1j + k] + E[do_1j + k]
                y[k] = evj * E[xo_vj + k] + mvj * E[do_vj + k]
            _pq_grad(q, w, G)
            r = 12 + 3 * (2 * j + (v - 1))
            for k in range(3):
                for m in range(4):
                    J[r + k, qo + m] = 2.0 * q[m] * y[k] - G[k, m]
                J[r + k, _EPS_POS[v, j]] += qq * E[xo_vj + k]
                J[r + k, _MU_POS[v, j]] += qq * E[do_vj + k]
                px1j = P[k, 0] * E[xo_1j] + P[k, 1] * E[xo_1j + 1] + P[k, 2] * E[xo_1j + 2]
                J[r + k, _EPS_POS[0, j]] -= px1j
    for m in range(4):
        J[24, m] = E[45 + m]
        J[25, 4 + m] = E[49 + m]


@njit(cache=True, nogil=True)
def chicago_G(u, E, dE, out):
    P = np.empty((3, 3), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * dE[xo_1j + k] - a12 * dE[18 + k]
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (avj * dE[xo_vj + k] - av2 * dE[xo_v2 + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )
            evj = u[_EPS_POS[v, j]]
            mvj = u[_MU_POS[v, j]]
            e1j = u[_EPS_POS[0, j]]
            do_vj = 27 + 3 * (3 * j + v)
            do_1j = 27 + 9 * j
            for k in range(3):
                w[k] = e1j * dE[xo_1j + k] + dE[do_1j + k]
            r = 12 + 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (evj * dE[xo_vj + k] + mvj * dE[do_vj + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )
    out[24] = dE[45] * u[0] + dE[46] * u[1] + dE[47] * u[2] + dE[48] * u[3]
    out[25] = dE[49] * u[4] + dE[50] * u[5] + dE[51] * u[6] + dE[52] * u[7]


# ---------------------------------------------------------------------------
# cleveland
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _cleveland_points_F(u, E, out):
    P = np.empty((3, 3), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * E[xo_1j + k] - a12 * E[18 + k]
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (avj * E[xo_vj + k] - av2 * E[xo_v2 + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )


@njit(cache=True, nogil=True)
def cleveland_F(u, E, out):
    _cleveland_points_F(u, E, out)
    P = np.empty((3, 3), dtype=np.complex128)
    z = np.empty(3, dtype=np.complex128)
    ap = u[16]
    a12 = u[13]
    # p1: polynomial foot point of the view-1 line
    n00, n01, n02 = E[27], E[28], E[29]
    p1_0 = -n00 * n02
    p1_1 = -n01 * n02
    p1_2 = n00 * n00 + n01 * n01
    z[0] = a12 * E[18] - ap * p1_0
    z[1] = a12 * E[19] - ap * p1_1
    z[2] = a12 * E[20] - ap * p1_2
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        no = 27 + 3 * v
        xo_v2 = 3 * (6 + v)
        av2 = _alpha_at(u, v, 2)
        nx = E[no] * E[xo_v2] + E[no + 1] * E[xo_v2 + 1] + E[no + 2] * E[xo_v2 + 2]
        acc = 0.0 + 0.0j
        for k in range(3):
            acc += E[no + k] * (P[k, 0] * z[0] + P[k, 1] * z[1] + P[k, 2] * z[2])
        out[12 + (v - 1)] = av2 * nx * qq - acc
    # direction rows
    out[14] = E[27] * u[17] + E[28] * u[18] + E[29] * u[19]
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        _pq(q, P)
        no = 27 + 3 * v
        acc = 0.0 + 0.0j
        for k in range(3):
            acc += E[no + k] * (P[k, 0] * u[17] + P[k, 1] * u[18] + P[k, 2] * u[19])
        out[14 + v] = acc
    out[17] = E[36] * u[0] + E[37] * u[1] + E[38] * u[2] + E[39] * u[3] - 1.0
    out[18] = E[40] * u[4] + E[41] * u[5] + E[42] * u[6] + E[43] * u[7] - 1.0
    out[19] = E[44] * u[17] + E[45] * u[18] + E[46] * u[19] - 1.0


@njit(cache=True, nogil=True)
def cleveland_J(u, E, J):
    J[:, :] = 0.0
    P = np.empty((3, 3), dtype=np.complex128)
    G = np.empty((3, 4), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    y = np.empty(3, dtype=np.complex128)
    z = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * E[xo_1j + k] - a12 * E[18 + k]
                y[k] = avj * E[xo_vj + k] - av2 * E[xo_v2 + k]
            _pq_grad(q, w, G)
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                for m in range(4):
                    J[r + k, qo + m] = 2.0 * q[m] * y[k] - G[k, m]
                J[r + k, _ALPHA_POS[v, j]] += qq * E[xo_vj + k]
                J[r + k, _ALPHA_POS[v, 2]] -= qq * E[xo_v2 + k]
                px12 = P[k, 0] * E[18] + P[k, 1] * E[19] + P[k, 2] * E[20]
                J[r + k, _ALPHA_POS[0, 2]] += px12
                if j == 1:
                    px1j = P[k, 0] * E[xo_1j] + P[k, 1] * E[xo_1j + 1] + P[k, 2] * E[xo_1j + 2]
                    J[r + k, _ALPHA_POS[0, 1]] -= px1j

    ap = u[16]
    a12 = u[13]
    n00, n01, n02 = E[27], E[28], E[29]
    p1_0 = -n00 * n02
    p1_1 = -n01 * n02
    p1_2 = n00 * n00 + n01 * n01
    z[0] = a12 * E[18] - ap * p1_0
    z[1] = a12 * E[19] - ap * p1_1
    z[2] = a12 * E[20] - ap * p1_2
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        _pq_grad(q, z, G)
        no = 27 + 3 * v
        xo_v2 = 3 * (6 + v)
        av2 = _alpha_at(u, v, 2)
        nx = E[no] * E[xo_v2] + E[no + 1] * E[xo_v2 + 1] + E[no + 2] * E[xo_v2 + 2]
        r = 12 + (v - 1)
        for m in range(4):
            acc = 0.0 + 0.0j
            for k in range(3):
                acc += E[no + k] * G[k, m]
            J[r, qo + m] = 2.0 * q[m] * av2 * nx - acc
        J[r, _ALPHA_POS[v, 2]] = nx * qq
        acc12 = 0.0 + 0.0j
        accp1 = 0.0 + 0.0j
        for k in range(3):
            pk0 = P[k, 0] * E[18] + P[k, 1] * E[19] + P[k, 2] * E[20]
            pk1 = P[k, 0] * p1_0 + P[k, 1] * p1_1 + P[k, 2] * p1_2
            acc12 += E[no + k] * pk0
            accp1 += E[no + k] * pk1
        J[r, _ALPHA_POS[0, 2]] -= acc12
        J[r, 16] += accp1

    # direction rows
    for k in range(3):
        J[14, 17 + k] = E[27 + k]
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        _pq(q, P)
        _pq_grad(q, u[17:20], G)
        no = 27 + 3 * v
        r = 14 + v
        for m in range(4):
            acc = 0.0 + 0.0j
            for k in range(3):
                acc += E[no + k] * G[k, m]
            J[r, qo + m] = acc
        for k in range(3):
            acc = 0.0 + 0.0j
            for i in range(3):
                acc += E[no + i] * P[i, k]
            J[r, 17 + k] = acc
    for m in range(4):
        J[17, m] = E[36 + m]
        J[18, 4 + m] = E[40 + m]
    for m in range(3):
        J[19, 17 + m] = E[44 + m]


@njit(cache=True, nogil=True)
def cleveland_G(u, E, dE, out):
    P = np.empty((3, 3), dtype=np.complex128)
    w = np.empty(3, dtype=np.complex128)
    z = np.empty(3, dtype=np.complex128)
    dz = np.empty(3, dtype=np.complex128)
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        xo_v2 = 3 * (6 + v)
        for j in range(2):
            avj = _alpha_at(u, v, j)
            av2 = _alpha_at(u, v, 2)
            a1j = _alpha_at(u, 0, j)
            a12 = _alpha_at(u, 0, 2)
            xo_vj = 3 * (3 * j + v)
            xo_1j = 9 * j
            for k in range(3):
                w[k] = a1j * dE[xo_1j + k] - a12 * dE[18 + k]
            r = 3 * (2 * j + (v - 1))
            for k in range(3):
                out[r + k] = qq * (avj * dE[xo_vj + k] - av2 * dE[xo_v2 + k]) - (
                    P[k, 0] * w[0] + P[k, 1] * w[1] + P[k, 2] * w[2]
                )

    ap = u[16]
    a12 = u[13]
    n00, n01, n02 = E[27], E[28], E[29]
    dn00, dn01, dn02 = dE[27], dE[28], dE[29]
    p1_0 = -n00 * n02
    p1_1 = -n01 * n02
    p1_2 = n00 * n00 + n01 * n01
    dp1_0 = -dn00 * n02 - n00 * dn02
    dp1_1 = -dn01 * n02 - n01 * dn02
    dp1_2 = 2.0 * n00 * dn00 + 2.0 * n01 * dn01
    z[0] = a12 * E[18] - ap * p1_0
    z[1] = a12 * E[19] - ap * p1_1
    z[2] = a12 * E[20] - ap * p1_2
    dz[0] = a12 * dE[18] - ap * dp1_0
    dz[1] = a12 * dE[19] - ap * dp1_1
    dz[2] = a12 * dE[20] - ap * dp1_2
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        qq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        _pq(q, P)
        no = 27 + 3 * v
        xo_v2 = 3 * (6 + v)
        av2 = _alpha_at(u, v, 2)
        dnx = 0.0 + 0.0j
        acc_dn = 0.0 + 0.0j
        acc_dz = 0.0 + 0.0j
        for k in range(3):
            dnx += dE[no + k] * E[xo_v2 + k] + E[no + k] * dE[xo_v2 + k]
            pz = P[k, 0] * z[0] + P[k, 1] * z[1] + P[k, 2] * z[2]
            pdz = P[k, 0] * dz[0] + P[k, 1] * dz[1] + P[k, 2] * dz[2]
            acc_dn += dE[no + k] * pz
            acc_dz += E[no + k] * pdz
        out[12 + (v - 1)] = av2 * qq * dnx - acc_dn - acc_dz

    out[14] = dE[27] * u[17] + dE[28] * u[18] + dE[29] * u[19]
    for v in range(1, 3):
        qo = 4 * (v - 1)
        q = u[qo:qo + 4]
        _pq(q, P)
        no = 27 + 3 * v
        acc = 0.0 + 0.0j
        for k in range(3):
            acc += dE[no + k] * (P[k, 0] * u[17] + P[k, 1] * u[18] + P[k, 2] * u[19])
        out[14 + v] = acc
    out[17] = dE[36] * u[0] + dE[37] * u[1] + dE[38] * u[2] + dE[39] * u[3]
    out[18] = dE[40] * u[4] + dE[41] * u[5] + dE[42] * u[6] + dE[43] * u[7]
    out[19] = dE[44] * u[17] + dE[45] * u[18] + dE[46] * u[19]


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def eval_F(sys_id, u, E, out):
    if sys_id == 0:
        chicago_F(u, E, out)
    else:
        cleveland_F(u, E, out)


@njit(cache=True, nogil=True)
def eval_J(sys_id, u, E, J):
    if sys_id == 0:
        chicago_J(u, E, J)
    else:
        cleveland_J(u, E, J)


@njit(cache=True, nogil=True)
def eval_G(sys_id, u, E, dE, out):
    if sys_id == 0:
        chicago_G(u, E, dE, out)
    else:
        cleveland_G(u, E, dE, out)


# ---------------------------------------------------------------------------
# dense complex LU with partial pivoting
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, fastmath=True)
def lu_factor(A, piv):
    """In-place factorization; returns (ok, |pivot| max/min ratio).

    Pivots on |re| + |im| (the usual cheap complex magnitude).
    """
    n = A.shape[0]
    pmax = 0.0
    pmin = 1e308
    for k in range(n):
        p = k
        best = abs(A[k, k].real) + abs(A[k, k].imag)
        for i in range(k + 1, n):
            m = abs(A[i, k].real) + abs(A[i, k].imag)
            if m > best:
                best = m
                p = i
        if best <= 1e-300:
            return False, 1e308
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
        if best > pmax:
            pmax = best
        if best < pmin:
            pmin = best
        inv = 1.0 / A[k, k]
        for i in range(k + 1, n):
            A[i, k] *= inv
            lik = A[i, k]
            for j in range(k + 1, n):
                A[i, j] -= lik * A[k, j]
    return True, pmax / pmin


@njit(cache=True, nogil=True, fastmath=True)
def lu_solve(A, piv, b):
    """Solve with a factorization from lu_factor; b is overwritten."""
    n = A.shape[0]
    for k in range(n):
        p = piv[k]
        if p != k:
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= A[i, j] * b[j]
        b[i] = s
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= A[i, j] * b[j]
        b[i] = s / A[i, i]


# ---------------------------------------------------------------------------
# tracking kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _velocity(sys_id, u, E0, dE, s, J, piv, k, Ebuf):
    """k = -J^{-1} (dF/dA . dA) at parameter point A(s); False if singular."""
    for i in range(E0.shape[0]):
        Ebuf[i] = E0[i] + s * dE[i]
    eval_J(sys_id, u, Ebuf, J)
    eval_G(sys_id, u, Ebuf, dE, k)
    ok, _ = lu_factor(J, piv)
    if not ok:
        return False
    for i in range(k.shape[0]):
        k[i] = -k[i]
    lu_solve(J, piv, k)
    return True


@njit(cache=True, nogil=True)
def _newton(sys_id, u, E, iters, tol, guard, J, piv, r):
    """Newton-correct u in place; returns (converged, condition estimate).

    Convergence requires the relative update norm and the post-update
    residual below tol * (1 + |u|_inf), and the total correction to stay
    within `guard` (path-jump protection; pass inf to disable).
    """
    cond = 0.0
    n = u.shape[0]
    moved = 0.0
    for _ in range(iters):
        eval_F(sys_id, u, E, r)
        eval_J(sys_id, u, E, J)
        ok, cnd = lu_factor(J, piv)
        if not ok:
            return False, 1e308
        cond = cnd
        for i in range(n):
            r[i] = -r[i]
        lu_solve(J, piv, r)
        dn = 0.0
        un = 0.0
        for i in range(n):
            u[i] = u[i] + r[i]
            a = abs(r[i])
            if a > dn:
                dn = a
            b = abs(u[i])
            if b > un:
                un = b
        moved += dn
        if moved > guard:
            return False, cond
        if dn <= tol * (1.0 + un):
            eval_F(sys_id, u, E, r)
            rn = 0.0
            for i in range(n):
                a = abs(r[i])
                if a > rn:
                    rn = a
            if rn <= tol * (1.0 + un):
                return True, cond
    return False, cond


@njit(cache=True, nogil=True)
def _normalized_residual(sys_id, u, E, r):
    eval_F(sys_id, u, E, r)
    rn = 0.0
    un = 0.0
    for i in range(u.shape[0]):
        a = abs(r[i])
        if a > rn:
            rn = a
        b = abs(u[i])
        if b > un:
            un = b
    return rn / (1.0 + un)


@njit(cache=True, nogil=True)
def track_one(sys_id, E0, E1, u0, opts, u_out):
    """Track one solution from parameters E0 to E1.

    Returns (status, steps, condition, normalized residual); the endpoint is
    written to u_out regardless of status.
    """
    n = u0.shape[0]
    ne = E0.shape[0]
    dE = np.empty(ne, dtype=np.complex128)
    for i in range(ne):
        dE[i] = E1[i] - E0[i]
    Ebuf = np.empty(ne, dtype=np.complex128)
    J = np.empty((n, n), dtype=np.complex128)
    piv = np.empty(n, dtype=np.int64)
    r = np.empty(n, dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    utmp = np.empty(n, dtype=np.complex128)
    upred = np.empty(n, dtype=np.complex128)

    u = u0.copy()
    s = 0.0
    dt = opts[OPT_DT0]
    steps = 0
    consecutive = 0
    cond = 0.0
    max_steps = int(opts[OPT_MAX_STEPS])
    max_corr = int(opts[OPT_MAX_CORR])
    tol = opts[OPT_CORR_TOL]
    status = -1

    while s < 1.0:
        if steps >= max_steps:
            status = MAX_STEPS_EXCEEDED
            break
        steps += 1
        last = (1.0 - s) <= dt
        h = (1.0 - s) if last else dt

        ok = _velocity(sys_id, u, E0, dE, s, J, piv, k1, Ebuf)
        if ok:
            for i in range(n):
                utmp[i] = u[i] + 0.5 * h * k1[i]
            ok = _velocity(sys_id, utmp, E0, dE, s + 0.5 * h, J, piv, k2, Ebuf)
        if ok:
            for i in range(n):
                utmp[i] = u[i] + 0.5 * h * k2[i]
            ok = _velocity(sys_id, utmp, E0, dE, s + 0.5 * h, J, piv, k3, Ebuf)
        if ok:
            for i in range(n):
                utmp[i] = u[i] + h * k3[i]
            ok = _velocity(sys_id, utmp, E0, dE, s + h, J, piv, k4, Ebuf)
        if ok:
            pred_disp = 0.0
            for i in range(n):
                upred[i] = u[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                a = abs(upred[i] - u[i])
                if a > pred_disp:
                    pred_disp = a
            un = 0.0
            for i in range(n):
                b = abs(u[i])
                if b > un:
                    un = b
            # corrections much larger than the predictor displacement signal
            # a jump onto a neighboring path; reject the step instead
            guard = 0.5 * pred_disp + 10.0 * tol * (1.0 + un)
            if last:
                for i in range(ne):
                    Ebuf[i] = E1[i]
                s_next = 1.0
            else:
                s_next = s + h
                for i in range(ne):
                    Ebuf[i] = E0[i] + s_next * dE[i]
            ok, cnd = _newton(sys_id, upred, Ebuf, max_corr, tol, guard, J, piv, r)
            if cnd < 1e308:
                cond = cnd
        if ok:
            for i in range(n):
                u[i] = upred[i]
            s = s_next
            consecutive += 1
            if consecutive >= int(opts[OPT_GROW_EVERY]):
                dt = dt * opts[OPT_GROWTH]
                if dt > opts[OPT_DT_MAX]:
                    dt = opts[OPT_DT_MAX]
                consecutive = 0
        else:
            consecutive = 0
            dt = dt * opts[OPT_SHRINK]
            if dt < opts[OPT_DT_MIN]:
                status = MIN_STEP_REACHED
                break

    if status < 0:
        s = 1.0
        _newton(sys_id, u, E1, int(opts[OPT_POLISH]), tol, 1e308, J, piv, r)
        resnorm = _normalized_residual(sys_id, u, E1, r)
        if resnorm < opts[OPT_ACCEPT]:
            status = SUCCESS
        elif cond > 1e14:
            status = SINGULAR_ENDPOINT
        else:
            status = CORRECTOR_FAILURE
    else:
        for i in range(ne):
            Ebuf[i] = E0[i] + s * dE[i]
        resnorm = _normalized_residual(sys_id, u, Ebuf, r)

    for i in range(n):
        u_out[i] = u[i]
    return status, steps, cond, resnorm, s


@njit(cache=True, nogil=True, parallel=True)
def track_many(sys_id, E0, E1, U0, opts, U_out, status_out, steps_out, cond_out,
               res_out, s_out):
    """Track a batch of starts; per-path arithmetic is independent of the
    thread schedule, so results do not depend on the thread count."""
    for p in prange(U0.shape[0]):
        st, sp, cn, rs, sr = track_one(sys_id, E0, E1, U0[p], opts, U_out[p])
        status_out[p] = st
        steps_out[p] = sp
        cond_out[p] = cn
        res_out[p] = rs
        s_out[p] = sr
