"""Rectifying coordinate change.

Data is centred, rotated onto its principal axes, optionally z-scored in
the circulation plane, and then bent so that a Fourier model of the limit
cycle becomes the unit circle traversed at a near-uniform rate::

    (th, r, z) -> (th - phi_hat(th), r / r_hat(th), z - z_hat(th))

The rectified state is re-embedded as ``q = (r' sin th', r' cos th', z')``
so that ``arctan2(q0, q1)`` recovers the rectified angle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import TimeSeriesDataset
from .errors import (DegenerateData, NoCirculation, NotInvertible,
                     OriginSingularity, Underdetermined)
from .fourier import FourierSeries, fit_fourier, fourier_design

log = logging.getLogger(__name__)

MONOTONE_GRID = 4096
TWO_PI = 2 * np.pi


def wrap(a):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, float), TWO_PI)


def center_and_rotate(points):
    """Centre ``points`` (N, n) and rotate them onto principal axes.

    Returns ``(mean, rotation, rotated)`` with ``rotated = (points - mean)
    @ rotation``. Columns of ``rotation`` are the principal axes in order of
    decreasing variance; each is signed so its largest entry is positive.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    n_pts, n = pts.shape
    if n_pts < n + 1:
        raise DegenerateData(f"need at least {n + 1} points, got {n_pts}")
    mean = pts.mean(axis=0)
    centred = pts - mean
    cov = centred.T @ centred / n_pts
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(evals[0], np.finfo(float).tiny)
    if evals[0] <= 0 or n < 2 or evals[1] <= 1e-14 * scale:
        raise DegenerateData("covariance rank < 2: no circulation plane")
    idx = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    rotation = evecs * signs
    return mean, rotation, centred @ rotation


def to_cylindrical(q):
    """``(theta, r, z)`` of a state, angle measured as ``arctan2(q0, q1)``."""
    q = np.asarray(q, float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    r = np.hypot(q2[:, 0], q2[:, 1])
    if np.any(r == 0):
        raise OriginSingularity("state lies on the axis of the circulation plane")
    th = np.arctan2(q2[:, 0], q2[:, 1])
    z = q2[:, 2:]
    if single:
        return float(th[0]), float(r[0]), z[0]
    return th, r, z


def _unwrap_segments(theta, seg_ids):
    out = np.empty_like(theta)
    for s in np.unique(seg_ids):
        m = seg_ids == s
        out[m] = np.unwrap(theta[m])
    return out


@dataclass(frozen=True)
class LimitCycleModel:
    r_hat: FourierSeries
    z_hat: FourierSeries
    phi_hat: FourierSeries
    period: float

    def check_radius(self):
        grid = np.linspace(0, TWO_PI, MONOTONE_GRID, endpoint=False)
        if np.min(self.r_hat.scalar(grid)) <= 0:
            raise DegenerateData("fitted cycle radius is not positive everywhere")

    @property
    def monotone(self) -> bool:
        """Whether ``th -> th - phi_hat(th)`` is strictly increasing."""
        grid = np.linspace(0, TWO_PI, MONOTONE_GRID, endpoint=False)
        return bool(np.all(1.0 - self.phi_hat.derivative().scalar(grid) > 0))

    def to_dict(self) -> dict:
        return {"r_hat": self.r_hat.to_dict(), "z_hat": self.z_hat.to_dict(),
                "phi_hat": self.phi_hat.to_dict(), "period": self.period}

    @classmethod
    def from_dict(cls, d) -> LimitCycleModel:
        return cls(FourierSeries.from_dict(d["r_hat"]),
                   FourierSeries.from_dict(d["z_hat"]),
                   FourierSeries.from_dict(d["phi_hat"]), float(d["period"]))


@dataclass(frozen=True)
class RectificationMap:
    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    cycle: LimitCycleModel

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def invertible(self) -> bool:
        return self.cycle.monotone

    @classmethod
    def identity(cls, dim: int = 2, period: float = TWO_PI) -> RectificationMap:
        cyc = LimitCycleModel(
            FourierSeries.constant_series([1.0]),
            FourierSeries.zeros(0, dim - 2),
            FourierSeries.zeros(0, 1), period)
        return cls(np.zeros(dim), np.eye(dim), np.ones(dim), cyc)

    # -- evaluation --------------------------------------------------------

    def plane(self, x):
        """Centred, rotated and scaled coordinates (N, n)."""
        x = np.atleast_2d(np.asarray(x, float))
        return ((x - self.mean) @ self.rotation) * self.scale

    def _parts(self, x, strict=True):
        y = self.plane(x)
        r = np.hypot(y[:, 0], y[:, 1])
        bad = r == 0
        if bad.any():
            if strict:
                raise OriginSingularity("state maps onto the circulation axis")
            r = np.where(bad, np.nan, r)
        th = np.arctan2(y[:, 0], y[:, 1])
        return y, th, r

    def rectify(self, x, strict=True):
        single = np.ndim(x) == 1
        y, th, r = self._parts(x, strict)
        cyc = self.cycle
        th1 = th - cyc.phi_hat.scalar(th)
        r1 = r / cyc.r_hat.scalar(th)
        z1 = y[:, 2:] - cyc.z_hat(th)
        q = np.column_stack([r1 * np.sin(th1), r1 * np.cos(th1), z1])
        return q[0] if single else q

    def rectify_jacobian(self, x, strict=True):
        """Derivative ``dq/dx``, shape (n, n) or (N, n, n)."""
        single = np.ndim(x) == 1
        J = self._jacobian(x, strict)
        return J[0] if single else J

    def _jacobian(self, x, strict=True):
        y, th, r = self._parts(x, strict)
        N, n = y.shape
        cyc = self.cycle
        ph = cyc.phi_hat.scalar(th)
        dph = cyc.phi_hat.derivative().scalar(th)
        rh = cyc.r_hat.scalar(th)
        drh = cyc.r_hat.derivative().scalar(th)
        dzh = cyc.z_hat.derivative()(th)
        th1 = th - ph
        r1 = r / rh
        # (th, r, z) with respect to plane coordinates y
        P = np.zeros((N, n, n))
        P[:, 0, 0] = y[:, 1] / r**2
        P[:, 0, 1] = -y[:, 0] / r**2
        P[:, 1, 0] = y[:, 0] / r
        P[:, 1, 1] = y[:, 1] / r
        P[:, 2:, 2:] = np.eye(n - 2)
        # rectified cylindrical with respect to raw cylindrical
        Mc = np.zeros((N, n, n))
        Mc[:, 0, 0] = 1.0 - dph
        Mc[:, 1, 0] = -r * drh / rh**2
        Mc[:, 1, 1] = 1.0 / rh
        Mc[:, 2:, 0] = -dzh
        Mc[:, 2:, 2:] = np.eye(n - 2)
        # Cartesian re-embedding
        s, c = np.sin(th1), np.cos(th1)
        Q = np.zeros((N, n, n))
        Q[:, 0, 0] = r1 * c
        Q[:, 0, 1] = s
        Q[:, 1, 0] = -r1 * s
        Q[:, 1, 1] = c
        Q[:, 2:, 2:] = np.eye(n - 2)
        Jy = (self.rotation * self.scale).T
        return Q @ Mc @ P @ Jy

    def cycle_angle(self, rect_angle):
        """Solve ``th - phi_hat(th) = rect_angle`` for the raw plane angle."""
        if not self.invertible:
            raise NotInvertible("protophase correction is not monotone")
        target = np.asarray(rect_angle, float)
        phi = self.cycle.phi_hat
        bound = float(phi.abs_bound()[0]) + 1e-12
        lo = target - bound
        hi = target + bound
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            g = mid - phi.scalar(mid) - target
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
        th = 0.5 * (lo + hi)
        dphi = phi.derivative()
        for _ in range(3):
            g = th - phi.scalar(th) - target
            th = th - g / (1.0 - dphi.scalar(th))
        return th

    def unrectify(self, q):
        single = np.ndim(q) == 1
        q2 = np.atleast_2d(np.asarray(q, float))
        r1 = np.hypot(q2[:, 0], q2[:, 1])
        if np.any(r1 == 0):
            raise OriginSingularity("rectified state lies on the axis")
        th1 = np.arctan2(q2[:, 0], q2[:, 1])
        th = self.cycle_angle(th1)
        r = r1 * self.cycle.r_hat.scalar(th)
        z = q2[:, 2:] + self.cycle.z_hat(th)
        y = np.column_stack([r * np.sin(th), r * np.cos(th), z])
        x = (y / self.scale) @ self.rotation.T + self.mean
        return x[0] if single else x

    def cycle_points(self, n_samples: int):
        """Points of the fitted cycle at uniformly spaced rectified angles."""
        th1 = np.linspace(0, TWO_PI, n_samples, endpoint=False)
        q = np.zeros((n_samples, self.dim))
        q[:, 0], q[:, 1] = np.sin(th1), np.cos(th1)
        return th1, self.unrectify(q)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(),
                "rotation": self.rotation.tolist(),
                "scale": self.scale.tolist(),
                "cycle": self.cycle.to_dict()}

    @classmethod
    def from_dict(cls, d) -> RectificationMap:
        return cls(np.asarray(d["mean"], float),
                   np.asarray(d["rotation"], float),
                   np.asarray(d["scale"], float),
                   LimitCycleModel.from_dict(d["cycle"]))


def fit_limit_cycle(dataset: TimeSeriesDataset, fourier_order: int = 10,
                    zscore: bool = True, weights=None) -> RectificationMap:
    """Fit the rectifying map from timestamped states."""
    X = dataset.x
    t = dataset.t
    seg = dataset.segment_ids
    n = X.shape[1]
    mean, rotation, rotated = center_and_rotate(X)
    scale = np.ones(n)
    if zscore:
        scale[:2] = 1.0 / rotated[:, :2].std(axis=0)
    y = rotated * scale
    th = np.arctan2(y[:, 0], y[:, 1])
    thu = _unwrap_segments(th, seg)

    seg_keys = np.unique(seg)
    winding = np.array([thu[seg == s][-1] - thu[seg == s][0] for s in seg_keys])
    if winding.sum() < 0:
        # orient the circulation plane so the cycle runs with increasing angle
        rotation = rotation.copy()
        rotation[:, 1] *= -1
        y[:, 1] *= -1
        th = np.arctan2(y[:, 0], y[:, 1])
        thu = _unwrap_segments(th, seg)
        winding = -winding
    counts = np.array([np.sum(seg == s) for s in seg_keys])
    usable = counts >= 3
    if winding.sum() < TWO_PI or np.any(winding[usable] < 0):
        raise NoCirculation(
            f"trajectories do not wind around the origin (total winding "
            f"{winding.sum():.3g} rad)")

    rates, w_rate = [], []
    for s, c in zip(seg_keys[usable], counts[usable]):
        m = seg == s
        ts = t[m]
        if ts[-1] > ts[0]:
            rates.append((thu[m][-1] - thu[m][0]) / (ts[-1] - ts[0]))
            w_rate.append(c)
    if not rates:
        raise NoCirculation("no segment long enough to estimate the period")
    omega = float(np.average(rates, weights=w_rate))
    if omega <= 0:
        raise NoCirculation("non-positive circulation rate")
    period = TWO_PI / omega

    r = np.hypot(y[:, 0], y[:, 1])
    r_hat = fit_fourier(th, r, fourier_order, weights)
    if n > 2:
        z_hat = fit_fourier(th, y[:, 2:], fourier_order, weights)
    else:
        z_hat = FourierSeries.zeros(fourier_order, 0)
    phi_hat = _fit_protophase(th, thu - omega * t, seg, fourier_order, weights)
    cycle = LimitCycleModel(r_hat, z_hat, phi_hat, period)
    cycle.check_radius()
    if not cycle.monotone:
        log.warning("fitted protophase correction is not monotone; "
                    "the rectification cannot be inverted")
    return RectificationMap(mean, rotation, scale, cycle)


def _fit_protophase(th, resid, seg, order, weights):
    """phi_hat(th) with per-segment offsets absorbed and zero constant term."""
    keys, inv = np.unique(seg, return_inverse=True)
    F = fourier_design(th, order, constant=False)
    S = np.zeros((th.size, keys.size))
    S[np.arange(th.size), inv] = 1.0
    X = np.hstack([F, S])
    Y = resid
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, float))
        X, Y = X * sw[:, None], Y * sw
    if X.shape[0] < X.shape[1]:
        raise Underdetermined("too few samples for the protophase fit")
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid_rms = float(np.sqrt(np.mean((Y - X @ coef) ** 2)))
    return FourierSeries(np.zeros(1), coef[:order, None].copy(),
                         coef[order:2 * order, None].copy(), resid_rms)
