# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: constant-velocity Kalman filter/smoother and
marching-squares cell classification."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, M_PI, isnan

cnp.import_array()


cdef inline void _predict(double *s, double *P, double dt, double qp, double qv):
    # F = [[1, dt], [0, 1]], Q = diag(qp, qv); P stored as (P00, P01, P11)
    s[0] = s[0] + dt * s[1]
    cdef double p00 = P[0] + 2.0 * dt * P[1] + dt * dt * P[2] + qp
    cdef double p01 = P[1] + dt * P[2]
    P[0] = p00
    P[1] = p01
    P[2] = P[2] + qv


def kalman_loglik(const double[:] y, double dt, double qp, double qv,
                  double r, double p0, double v0, int skip=2):
    """Innovation log-likelihood of one series."""
    cdef Py_ssize_t n = y.shape[0], k
    cdef double s[2]
    cdef double P[3]
    cdef double S, e, k0, k1, ll = 0.0
    cdef double p00, p01, p11
    s[0] = y[0]
    s[1] = 0.0
    P[0] = p0
    P[1] = 0.0
    P[2] = v0
    for k in range(n):
        if k:
            _predict(s, P, dt, qp, qv)
        S = P[0] + r
        e = y[k] - s[0]
        if k >= skip:
            ll -= 0.5 * (log(2.0 * M_PI * S) + e * e / S)
        k0 = P[0] / S
        k1 = P[1] / S
        s[0] += k0 * e
        s[1] += k1 * e
        p00 = P[0] - k0 * P[0]
        p01 = P[1] - k0 * P[1]
        p11 = P[2] - k1 * P[1]
        P[0] = p00
        P[1] = p01
        P[2] = p11
    return ll


def kalman_smooth(const double[:] y, double dt, double qp, double qv,
                  double r, double p0, double v0):
    """Rauch-Tung-Striebel smoothed positions and velocities."""
    cdef Py_ssize_t n = y.shape[0], k
    fs_np = np.empty((n, 2))
    fP_np = np.empty((n, 3))
    ps_np = np.empty((n, 2))
    pP_np = np.empty((n, 3))
    out_np = np.empty((n, 2))
    cdef double[:, :] fs = fs_np
    cdef double[:, :] fP = fP_np
    cdef double[:, :] ps = ps_np
    cdef double[:, :] pP = pP_np
    cdef double[:, :] out = out_np
    cdef double s[2]
    cdef double P[3]
    cdef double S, e, k0, k1, p00, p01, p11, det, a00, a01, a11
    cdef double c00, c01, c10, c11, d0, d1
    s[0] = y[0]
    s[1] = 0.0
    P[0] = p0
    P[1] = 0.0
    P[2] = v0
    for k in range(n):
        if k:
            _predict(s, P, dt, qp, qv)
        ps[k, 0] = s[0]
        ps[k, 1] = s[1]
        pP[k, 0] = P[0]
        pP[k, 1] = P[1]
        pP[k, 2] = P[2]
        S = P[0] + r
        e = y[k] - s[0]
        k0 = P[0] / S
        k1 = P[1] / S
        s[0] += k0 * e
        s[1] += k1 * e
        p00 = P[0] - k0 * P[0]
        p01 = P[1] - k0 * P[1]
        p11 = P[2] - k1 * P[1]
        P[0] = p00
        P[1] = p01
        P[2] = p11
        fs[k, 0] = s[0]
        fs[k, 1] = s[1]
        fP[k, 0] = P[0]
        fP[k, 1] = P[1]
        fP[k, 2] = P[2]
    out[n - 1, 0] = fs[n - 1, 0]
    out[n - 1, 1] = fs[n - 1, 1]
    for k in range(n - 2, -1, -1):
        # C = P_k F^T (P_{k+1|k})^-1
        a00 = fP[k, 0] + dt * fP[k, 1]
        a01 = fP[k, 1]
        a11 = fP[k, 1] + dt * fP[k, 2]
        # P_k F^T = [[a00, a01], [a11, fP[k,2]]]
        det = pP[k + 1, 0] * pP[k + 1, 2] - pP[k + 1, 1] * pP[k + 1, 1]
        c00 = (a00 * pP[k + 1, 2] - a01 * pP[k + 1, 1]) / det
        c01 = (-a00 * pP[k + 1, 1] + a01 * pP[k + 1, 0]) / det
        c10 = (a11 * pP[k + 1, 2] - fP[k, 2] * pP[k + 1, 1]) / det
        c11 = (-a11 * pP[k + 1, 1] + fP[k, 2] * pP[k + 1, 0]) / det
        d0 = out[k + 1, 0] - ps[k + 1, 0]
        d1 = out[k + 1, 1] - ps[k + 1, 1]
        out[k, 0] = fs[k, 0] + c00 * d0 + c01 * d1
        out[k, 1] = fs[k, 1] + c10 * d0 + c11 * d1
    return out_np[:, 0].copy(), out_np[:, 1].copy()


# edges: 0 top (c0-c1), 1 right (c1-c2), 2 bottom (c3-c2), 3 left (c0-c3)
cdef int[16][4] _TABLE = [
    [-1, -1, -1, -1], [3, 0, -1, -1], [0, 1, -1, -1], [3, 1, -1, -1],
    [1, 2, -1, -1], [-1, -1, -1, -1], [0, 2, -1, -1], [3, 2, -1, -1],
    [2, 3, -1, -1], [0, 2, -1, -1], [-1, -1, -1, -1], [1, 2, -1, -1],
    [1, 3, -1, -1], [0, 1, -1, -1], [3, 0, -1, -1], [-1, -1, -1, -1],
]


cdef inline void _edge_point(int e, Py_ssize_t i, Py_ssize_t j,
                             double f0, double f1, double f2, double f3,
                             double level, Py_ssize_t nc,
                             double *pr, double *pc, long long *eid):
    cdef double t
    if e == 0:
        t = (level - f0) / (f1 - f0)
        pr[0] = i
        pc[0] = j + t
        eid[0] = (i * nc + j) * 2
    elif e == 1:
        t = (level - f1) / (f2 - f1)
        pr[0] = i + t
        pc[0] = j + 1
        eid[0] = (i * nc + j + 1) * 2 + 1
    elif e == 2:
        t = (level - f3) / (f2 - f3)
        pr[0] = i + 1
        pc[0] = j + t
        eid[0] = ((i + 1) * nc + j) * 2
    else:
        t = (level - f0) / (f3 - f0)
        pr[0] = i + t
        pc[0] = j
        eid[0] = (i * nc + j) * 2 + 1


def marching_squares(const double[:, :] F, double level=0.0):
    """Contour segments of ``F == level``.

    Returns ``(points, edges)``: points (S, 4) as ``(r0, c0, r1, c1)`` in
    fractional grid indices, edges (S, 2) integer ids of the crossed grid
    edges (shared between neighbouring cells). Cells touching NaN skipped.
    """
    cdef Py_ssize_t nr = F.shape[0], nc = F.shape[1], i, j
    cdef Py_ssize_t cap = 2 * (nr - 1) * (nc - 1) + 1
    if nr < 2 or nc < 2:
        return np.empty((0, 4)), np.empty((0, 2), dtype=np.int64)
    pts_np = np.empty((cap, 4))
    eds_np = np.empty((cap, 2), dtype=np.int64)
    cdef double[:, :] pts = pts_np
    cdef long long[:, :] eds = eds_np
    cdef Py_ssize_t n = 0
    cdef double f0, f1, f2, f3, centre
    cdef int case, a, b, q
    cdef int segs[4]
    cdef double pr, pc
    cdef long long eid
    for i in range(nr - 1):
        for j in range(nc - 1):
            f0 = F[i, j]
            f1 = F[i, j + 1]
            f2 = F[i + 1, j + 1]
            f3 = F[i + 1, j]
            if isnan(f0) or isnan(f1) or isnan(f2) or isnan(f3):
                continue
            case = ((f0 >= level) * 1 | (f1 >= level) * 2
                    | (f2 >= level) * 4 | (f3 >= level) * 8)
            if case == 0 or case == 15:
                continue
            if case == 5 or case == 10:
                centre = 0.25 * (f0 + f1 + f2 + f3)
                if (case == 5) == (centre >= level):
                    segs[0] = 0; segs[1] = 1; segs[2] = 2; segs[3] = 3
                else:
                    segs[0] = 3; segs[1] = 0; segs[2] = 1; segs[3] = 2
            else:
                for q in range(4):
                    segs[q] = _TABLE[case][q]
            for q in range(0, 4, 2):
                a = segs[q]
                b = segs[q + 1]
                if a < 0:
                    break
                _edge_point(a, i, j, f0, f1, f2, f3, level, nc, &pr, &pc, &eid)
                pts[n, 0] = pr
                pts[n, 1] = pc
                eds[n, 0] = eid
                _edge_point(b, i, j, f0, f1, f2, f3, level, nc, &pr, &pc, &eid)
                pts[n, 2] = pr
                pts[n, 3] = pc
                eds[n, 1] = eid
                n += 1
    return pts_np[:n].copy(), eds_np[:n].copy()
