"""Pure-Python/numpy versions of the compiled kernels.

Same signatures and results as ``_kernels``. The Kalman recursions exploit
that the covariance sequence depends only on the series length, so the
scalar Riccati loop runs once and the state updates are vectorised across
all series of that length.
"""
import math

import numpy as np


def _riccati(n, dt, qp, qv, r, p0, v0):
    """Predicted/filtered covariances (P00, P01, P11) and gains."""
    pred = np.empty((n, 3))
    filt = np.empty((n, 3))
    gain = np.empty((n, 2))
    S = np.empty(n)
    P00, P01, P11 = p0, 0.0, v0
    for k in range(n):
        if k:
            P00, P01, P11 = (P00 + 2.0 * dt * P01 + dt * dt * P11 + qp,
                             P01 + dt * P11, P11 + qv)
        pred[k] = P00, P01, P11
        s = P00 + r
        k0, k1 = P00 / s, P01 / s
        P00, P01, P11 = P00 - k0 * P00, P01 - k0 * P01, P11 - k1 * P01
        filt[k] = P00, P01, P11
        gain[k] = k0, k1
        S[k] = s
    return pred, filt, gain, S


def _filter(Y, dt, gain):
    """Filtered and predicted states for series stacked in rows of ``Y``."""
    m, n = Y.shape
    fs = np.empty((m, n, 2))
    ps = np.empty((m, n, 2))
    e = np.empty((m, n))
    s0, s1 = Y[:, 0].copy(), np.zeros(m)
    for k in range(n):
        if k:
            s0 = s0 + dt * s1
        ps[:, k, 0], ps[:, k, 1] = s0, s1
        e[:, k] = Y[:, k] - s0
        s0 = s0 + gain[k, 0] * e[:, k]
        s1 = s1 + gain[k, 1] * e[:, k]
        fs[:, k, 0], fs[:, k, 1] = s0, s1
    return fs, ps, e


def kalman_loglik_many(series, dt, qp, qv, r, p0, v0, skip=2):
    by_len = {}
    for y in series:
        by_len.setdefault(len(y), []).append(np.asarray(y, float))
    total = 0.0
    for n, ys in by_len.items():
        _, _, gain, S = _riccati(n, dt, qp, qv, r, p0, v0)
        _, _, e = _filter(np.vstack(ys), dt, gain)
        ll = -0.5 * (np.log(2.0 * math.pi * S[skip:]) + e[:, skip:] ** 2
                     / S[skip:])
        total += float(ll.sum())
    return total


def kalman_loglik(y, dt, qp, qv, r, p0, v0, skip=2):
    return kalman_loglik_many([y], dt, qp, qv, r, p0, v0, skip)


def kalman_smooth(y, dt, qp, qv, r, p0, v0):
    y = np.asarray(y, float)
    n = len(y)
    pred, filt, gain, _ = _riccati(n, dt, qp, qv, r, p0, v0)
    fs, ps, _ = _filter(y[None, :], dt, gain)
    fs, ps = fs[0], ps[0]
    out = np.empty((n, 2))
    out[-1] = fs[-1]
    for k in range(n - 2, -1, -1):
        f00, f01, f11 = filt[k]
        b00, b01, b11 = pred[k + 1]
        A = np.array([[f00 + dt * f01, f01], [f01 + dt * f11, f11]])
        B = np.array([[b00, b01], [b01, b11]])
        C = A @ np.linalg.inv(B)
        out[k] = fs[k] + C @ (out[k + 1] - ps[k + 1])
    return out[:, 0].copy(), out[:, 1].copy()


# edges: 0 top (c0-c1), 1 right (c1-c2), 2 bottom (c3-c2), 3 left (c0-c3)
_TABLE = {
    1: (3, 0), 2: (0, 1), 3: (3, 1), 4: (1, 2), 6: (0, 2), 7: (3, 2),
    8: (2, 3), 9: (0, 2), 11: (1, 2), 12: (1, 3), 13: (0, 1), 14: (3, 0),
}


def _edge_point(e, i, j, f, level, nc):
    f0, f1, f2, f3 = f
    if e == 0:
        return i, j + (level - f0) / (f1 - f0), (i * nc + j) * 2
    if e == 1:
        return i + (level - f1) / (f2 - f1), j + 1, (i * nc + j + 1) * 2 + 1
    if e == 2:
        return i + 1, j + (level - f3) / (f2 - f3), ((i + 1) * nc + j) * 2
    return i + (level - f0) / (f3 - f0), j, (i * nc + j) * 2 + 1


def marching_squares(F, level=0.0):
    F = np.asarray(F, float)
    nr, nc = F.shape
    pts, eds = [], []
    for i in range(nr - 1):
        for j in range(nc - 1):
            f = (F[i, j], F[i, j + 1], F[i + 1, j + 1], F[i + 1, j])
            if any(math.isnan(v) for v in f):
                continue
            case = sum(1 << b for b, v in enumerate(f) if v >= level)
            if case in (0, 15):
                continue
            if case in (5, 10):
                centre = 0.25 * sum(f)
                if (case == 5) == (centre >= level):
                    pairs = ((0, 1), (2, 3))
                else:
                    pairs = ((3, 0), (1, 2))
            else:
                pairs = (_TABLE[case],)
            for a, b in pairs:
                ra, ca, ea = _edge_point(a, i, j, f, level, nc)
                rb, cb, eb = _edge_point(b, i, j, f, level, nc)
                pts.append((ra, ca, rb, cb))
                eds.append((ea, eb))
    return (np.array(pts, float).reshape(-1, 4),
            np.array(eds, dtype=np.int64).reshape(-1, 2))
