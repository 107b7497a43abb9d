"""Isochron extraction: level sets of the estimated phase on a 2-D slice."""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyWindow


def _chains(edges):
    """Group segments (pairs of shared edge ids) into ordered chains."""
    adj = {}
    for s, (a, b) in enumerate(edges.tolist()):
        adj.setdefault(a, []).append(s)
        adj.setdefault(b, []).append(s)
    used = np.zeros(len(edges), bool)
    chains = []

    def walk(s, node):
        order = []
        while True:
            used[s] = True
            a, b = edges[s]
            nxt = b if a == node else a
            order.append((s, node, nxt))
            cand = [t for t in adj[nxt] if not used[t]]
            if not cand:
                return order
            s, node = cand[0], nxt

    # open chains start at edge ids touched once
    starts = [k for k, v in adj.items() if len(v) == 1]
    for k in sorted(starts):
        s = adj[k][0]
        if not used[s]:
            chains.append(walk(s, k))
    for s in range(len(edges)):
        if not used[s]:
            chains.append(walk(s, int(edges[s][0])))
    return chains


def slice_grid(window, grid, fixed, axes=(0, 1)):
    """States on the ``grid`` = (n_u, n_v) lattice spanning ``window`` =
    ((u0, u1), (v0, v1)), or flat (u0, u1, v0, v1), along ``axes``; other
    coordinates from ``fixed``."""
    w = np.asarray(window, float)
    if w.size != 4:
        raise ConfigError("window needs four bounds u0, u1, v0, v1")
    (u0, u1), (v0, v1) = w.reshape(2, 2)
    nu, nv = grid
    if nu < 2 or nv < 2:
        raise ConfigError("grid needs at least 2 points per axis")
    if not (u1 > u0 and v1 > v0):
        raise ConfigError("window bounds must be increasing")
    u = np.linspace(u0, u1, nu)
    v = np.linspace(v0, v1, nv)
    U, V = np.meshgrid(u, v)          # rows follow v, columns follow u
    X = np.tile(np.asarray(fixed, float), (nv * nu, 1))
    X[:, axes[0]] = U.ravel()
    X[:, axes[1]] = V.ravel()
    return u, v, X


def phase_grid(model, X, shape):
    """Phase on grid states; NaN off the fitted annulus or at the axis."""
    q = model.rect.rectify(X, strict=False)
    r = np.hypot(q[:, 0], q[:, 1])
    ok = np.isfinite(r) & (r > 0)
    rr = model.diagnostics.get("radius_range")
    if rr is not None:
        ok &= (r >= rr[0]) & (r <= rr[1])
    ph = np.full(len(X), np.nan)
    if ok.any():
        ph[ok] = model.phase(X[ok], strict=False)
    return ph.reshape(shape)


def isochrons(model, levels, window, grid=(101, 101), fixed=None, axes=(0, 1),
              backend=None):
    """Isochron polylines in original coordinates, one list per level.

    Contours ``sin(phase - level) = 0`` and keeps the branch where
    ``cos(phase - level) > 0``, so the 2 pi seam never produces spurious
    lines.
    """
    levels = [float(lv) for lv in levels]
    if not levels:
        return []
    n = model.dim
    fixed = model.rect.mean if fixed is None else np.asarray(fixed, float)
    if fixed.shape != (n,):
        raise ConfigError(f"fixed coordinates must have length {n}")
    u, v, X = slice_grid(window, grid, fixed, axes)
    ph = phase_grid(model, X, (len(v), len(u)))
    if not np.isfinite(ph).any():
        raise EmptyWindow("no grid point lies in the rectifiable annulus")
    du, dv = u[1] - u[0], v[1] - v[0]

    def to_state(rc):
        s = np.tile(fixed, (len(rc), 1))
        s[:, axes[0]] = u[0] + rc[:, 1] * du
        s[:, axes[1]] = v[0] + rc[:, 0] * dv
        return s

    out = []
    for lv in levels:
        F = np.sin(ph - lv)
        segs, edges = kernels.marching_squares(F, 0.0, backend=backend)
        if len(segs) == 0:
            out.append([])
            continue
        mid = to_state(0.5 * (segs[:, :2] + segs[:, 2:]))
        keep = np.cos(model.phase(mid, strict=False) - lv) > 0
        segs, edges = segs[keep], edges[keep]
        lines = []
        for chain in _chains(edges):
            pts = []
            for k, (s, a, b) in enumerate(chain):
                p0, p1 = segs[s, :2], segs[s, 2:]
                if edges[s][0] != a:
                    p0, p1 = p1, p0
                if k == 0:
                    pts.append(p0)
                pts.append(p1)
            lines.append(to_state(np.array(pts)))
        out.append(lines)
    return out
