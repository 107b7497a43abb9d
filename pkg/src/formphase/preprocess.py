"""Measurement preprocessing: Kalman smoothing with velocity states,
z-scoring of the leading principal components, and the filter-bank
embedding used for relaxation (spiking) oscillators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, optimize, signal

from . import kernels
from .dataset import Segment, TimeSeriesDataset
from .errors import (ConfigError, DegenerateData, MismatchedTimestamps,
                     SegmentTooShort, TooFewSpikes)
from .rectify import center_and_rotate

log = logging.getLogger(__name__)


# -- Kalman smoother -----------------------------------------------------------

@dataclass
class SmootherConfig:
    """Constant-velocity smoother settings.

    ``q_pos``/``q_vel`` left as None are estimated by maximum likelihood
    over ``log_range`` (natural-log offsets around data-derived scales).
    ``r_obs`` None means a robust per-coordinate estimate from second
    differences; a scalar or per-coordinate sequence fixes it.
    """
    dt: float | None = None
    q_pos: float | None = None
    q_vel: float | None = None
    r_obs: float | list | None = None
    log_range: tuple = (-14.0, 6.0)
    grid: int = 9
    restarts: int = 3
    skip: int = 2

    def validate(self):
        for name in ("dt", "q_pos", "q_vel"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.r_obs is not None and np.any(np.asarray(self.r_obs) <= 0):
            raise ConfigError("r_obs must be positive")
        if self.restarts < 1 or self.grid < 2:
            raise ConfigError("need at least one restart and a 2-point grid")


def _dt_of(segments, dt):
    if dt is not None:
        return float(dt)
    steps = np.concatenate([np.diff(s.t) for s in segments])
    if len(steps) == 0 or not np.all(steps > 0):
        raise ConfigError("timestamps must be strictly increasing")
    return float(np.median(steps))


def noise_variance(y) -> float:
    """Robust white-noise variance from second differences (MAD based)."""
    d2 = np.diff(np.asarray(y, float), 2)
    mad = np.median(np.abs(d2 - np.median(d2)))
    return float((1.4826 * mad) ** 2 / 6.0)


@dataclass
class _Problem:
    series: list  # per coordinate: list of 1-D arrays
    dt: float
    r: np.ndarray
    p0: np.ndarray
    v0: np.ndarray
    base: np.ndarray  # log scales for (q_pos, q_vel)
    skip: int

    def loglik(self, qp, qv):
        return sum(kernels.kalman_loglik_many(ys, self.dt, qp, qv, self.r[k],
                                              self.p0[k], self.v0[k], self.skip)
                   for k, ys in enumerate(self.series))


def _problem(segments, cfg: SmootherConfig) -> _Problem:
    for s in segments:
        if len(s) < 3:
            raise SegmentTooShort(f"segment of {len(s)} samples; need >= 3")
    dt = _dt_of(segments, cfg.dt)
    D = segments[0].x.shape[1]
    series = [[s.x[:, k] for s in segments] for k in range(D)]
    if cfg.r_obs is None:
        r = np.array([np.median([noise_variance(y) for y in ys])
                      for ys in series])
    else:
        r = np.broadcast_to(np.asarray(cfg.r_obs, float), (D,)).copy()
    allx = np.concatenate([s.x for s in segments])
    var = np.maximum(allx.var(axis=0), 1e-300)
    r = np.maximum(r, 1e-12 * var)
    vel = np.concatenate([np.diff(s.x, axis=0) / dt for s in segments])
    vvar = np.maximum((vel ** 2).mean(axis=0), 1e-300)
    # loose priors; the first ``skip`` innovations are excluded anyway
    p0 = var + r
    v0 = 10.0 * vvar
    base = np.log([float(np.mean(r)) + 1e-300,
                   float(np.mean(vvar)) * dt + 1e-300])
    return _Problem(series, dt, r, p0, v0, base, cfg.skip)


def fit_smoother(data, cfg: SmootherConfig | None = None) -> SmootherConfig:
    """Fill in ``dt``, ``r_obs`` and the likelihood-maximising process
    variances, returning a fully specified config."""
    cfg = cfg or SmootherConfig()
    cfg.validate()
    segments = _segments(data)
    pb = _problem(segments, cfg)
    lo, hi = cfg.log_range
    free = [cfg.q_pos is None, cfg.q_vel is None]
    fixed = np.log([cfg.q_pos or 1.0, cfg.q_vel or 1.0])

    def unpack(u):
        z = fixed.copy()
        z[np.array(free)] = u
        return np.exp(z)

    def nll(u):
        qp, qv = unpack(u)
        val = -pb.loglik(qp, qv)
        return val if np.isfinite(val) else 1e300

    if any(free):
        idx = [k for k in range(2) if free[k]]
        bounds = [(pb.base[k] + lo, pb.base[k] + hi) for k in idx]
        axes = [np.linspace(b0, b1, cfg.grid) for b0, b1 in bounds]
        cand = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(idx), -1).T
        vals = np.array([nll(u) for u in cand])
        best_u, best = None, np.inf
        for start in cand[np.argsort(vals, kind="stable")[:cfg.restarts]]:
            res = optimize.minimize(nll, start, method="Nelder-Mead",
                                    bounds=bounds,
                                    options={"xatol": 1e-6, "fatol": 1e-9,
                                             "maxiter": 2000})
            if res.fun < best:
                best_u, best = res.x, res.fun
        qp, qv = unpack(best_u)
    else:
        qp, qv = cfg.q_pos, cfg.q_vel
    return replace(cfg, dt=pb.dt, q_pos=float(qp), q_vel=float(qv),
                   r_obs=pb.r.tolist())


def _segments(data) -> list:
    if isinstance(data, TimeSeriesDataset):
        return data.segments
    if isinstance(data, Segment):
        return [data]
    return [s if isinstance(s, Segment) else Segment(np.arange(len(s)), s)
            for s in data]


def kalman_smooth(data, cfg: SmootherConfig | None = None):
    """Smoothed positions and velocities for every segment.

    ``data`` is a dataset, a segment or a list of segments/arrays. Process
    variances missing from ``cfg`` are estimated first. Returns a
    :class:`TimeSeriesDataset` carrying ``dx``; the fitted config is stored
    under ``meta["smoother"]``.
    """
    fitted = fit_smoother(data, cfg)
    segments = _segments(data)
    pb = _problem(segments, fitted)
    out = []
    for s in segments:
        pos = np.empty_like(s.x)
        vel = np.empty_like(s.x)
        for k in range(s.x.shape[1]):
            pos[:, k], vel[:, k] = kernels.kalman_smooth(
                s.x[:, k], pb.dt, fitted.q_pos, fitted.q_vel, pb.r[k],
                pb.p0[k], pb.v0[k])
        out.append(Segment(s.t, pos, vel, s.phase))
    meta = dict(data.meta) if isinstance(data, TimeSeriesDataset) else {}
    meta["smoother"] = {"dt": fitted.dt, "q_pos": fitted.q_pos,
                        "q_vel": fitted.q_vel, "r_obs": fitted.r_obs}
    return TimeSeriesDataset(out, meta)


# -- z-scoring -----------------------------------------------------------------

@dataclass(frozen=True)
class ZScore:
    """``y = ((x - mean) @ rotation) * scale``; scale is 1 beyond PC 2."""
    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return ((np.asarray(x, float) - self.mean) @ self.rotation) * self.scale

    def apply_vector(self, v):
        return (np.asarray(v, float) @ self.rotation) * self.scale

    def invert(self, y):
        return (np.asarray(y, float) / self.scale) @ self.rotation.T + self.mean


def zscore_pcs(data):
    """Rotate onto principal axes and give the first two unit variance.

    Accepts an array or a dataset (velocities are transformed with the
    linear part). Returns ``(transformed, ZScore)``.
    """
    x = data.x if isinstance(data, TimeSeriesDataset) else np.asarray(data, float)
    mean, R, y = center_and_rotate(x)
    sd = y[:, :2].std(axis=0)
    if np.any(sd <= 1e-12 * max(1.0, float(np.abs(x).max()))):
        raise DegenerateData("a leading principal component has zero variance")
    scale = np.ones(x.shape[1])
    scale[:2] = 1.0 / sd
    zs = ZScore(mean, R, scale)
    if not isinstance(data, TimeSeriesDataset):
        return zs.apply(x), zs
    segs = [Segment(s.t, zs.apply(s.x),
                    None if s.dx is None else zs.apply_vector(s.dx), s.phase)
            for s in data.segments]
    return TimeSeriesDataset(segs, dict(data.meta)), zs


# -- filter bank ---------------------------------------------------------------

@dataclass
class FilterBankConfig:
    """Spike threshold ``mean + threshold_sigma * std`` with a refractory
    lockout of ``refractory * ISI``. ``isi`` fixes the inter-spike interval
    instead of detecting it; ``detrend`` applies a moving median / IQR
    normalisation over ``detrend_window * ISI``."""
    isi: float | None = None
    detrend: bool = True
    threshold_sigma: float = 2.0
    refractory: float = 0.25
    detrend_window: float = 3.0
    order: int = 2

    def cutoffs(self, isi):
        """Cutoff periods (2 ISI, ISI, ISI / 2), lowest frequency first."""
        return (2.0 * isi, isi, 0.5 * isi)


def detect_spikes(y, dt, threshold_sigma=2.0, lockout=0.0):
    """Indices of upward threshold crossings separated by ``lockout``."""
    y = np.asarray(y, float)
    thr = y.mean() + threshold_sigma * y.std()
    up = np.flatnonzero((y[:-1] < thr) & (y[1:] >= thr)) + 1
    keep, last = [], -np.inf
    for i in up:
        if (i - last) * dt >= lockout:
            keep.append(i)
            last = i
    return np.array(keep, dtype=int)


def _median_isi(y, dt, cfg, lockout):
    spikes = detect_spikes(y, dt, cfg.threshold_sigma, lockout)
    if len(spikes) < 3:
        raise TooFewSpikes(f"found {len(spikes)} spikes; need >= 3")
    return float(np.median(np.diff(spikes)) * dt)


def _normalise(y, dt, isi, cfg):
    w = max(3, int(round(cfg.detrend_window * isi / dt)) | 1)
    med = ndimage.median_filter(y, size=w, mode="nearest")
    q75 = ndimage.percentile_filter(y, 75, size=w, mode="nearest")
    q25 = ndimage.percentile_filter(y, 25, size=w, mode="nearest")
    iqr = q75 - q25
    # flat baselines (spikes on a constant) give a zero IQR; floor it with
    # the overall spread so the rescaled signal stays finite
    floor = max(float(np.median(iqr)), 1e-3 * float(np.std(y)), 1e-300)
    iqr = np.maximum(iqr, floor)
    return (y - med) / iqr


@dataclass
class FilterBankResult:
    embedded: list            # per oscillator (N, 2)
    isi: list                 # per oscillator ISI (time units)
    cutoffs: list             # per oscillator (2 ISI, ISI, ISI/2)
    meta: dict = field(default_factory=dict)


def filter_bank_embed(signals, dt: float, cfg: FilterBankConfig | None = None
                      ) -> FilterBankResult:
    """Embed each scalar signal as ``(s1 - s2, s2 - s3)``, where ``s1..s3``
    are order-2 Butterworth lowpass outputs with cutoff periods of 2, 1 and
    1/2 ISI, filtered causally."""
    cfg = cfg or FilterBankConfig()
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if isinstance(signals, np.ndarray) and signals.ndim == 1:
        signals = [signals]
    out, isis, cuts = [], [], []
    for y in signals:
        y = np.asarray(y, float)
        if cfg.isi is not None:
            isi = float(cfg.isi)
        else:
            isi = _median_isi(signal.detrend(y), dt, cfg, 0.0)
        if cfg.detrend:
            y = _normalise(y, dt, isi, cfg)
            if cfg.isi is None:
                isi = _median_isi(y, dt, cfg, cfg.refractory * isi)
        periods = cfg.cutoffs(isi)
        if 2.0 * dt >= min(periods):
            raise ConfigError("sampling too coarse for the ISI/2 cutoff")
        s = [signal.lfilter(*signal.butter(cfg.order, 1.0 / p, fs=1.0 / dt), y)
             for p in periods]
        out.append(np.column_stack([s[0] - s[1], s[1] - s[2]]))
        isis.append(isi)
        cuts.append(list(periods))
    return FilterBankResult(out, isis, cuts,
                            {"isi": isis, "cutoff_periods": cuts,
                             "order": cfg.order})


def relative_phase(phases, times=None):
    """Unwrap each oscillator's phase and subtract the across-oscillator
    mean at every timestamp. Returns (n_osc, N)."""
    phases = [np.asarray(p, float) for p in phases]
    if len(phases) < 2:
        raise ConfigError("need at least two oscillators")
    if len({len(p) for p in phases}) != 1:
        raise MismatchedTimestamps("phase series differ in length")
    if times is not None:
        t0 = np.asarray(times[0], float)
        if any(len(t) != len(t0) or not np.array_equal(np.asarray(t, float), t0)
               for t in times):
            raise MismatchedTimestamps("oscillators sampled at different times")
    U = np.unwrap(np.vstack(phases), axis=1)
    rel = U - U.mean(axis=0)
    # second pass removes the rounding left by large unwrapped values
    return rel - rel.mean(axis=0)
