"""Reference estimators and the residual-variance comparison harness."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dataset import TimeSeriesDataset, fmt
from .errors import MissingLabels, TooFewSamples
from .rectify import TWO_PI, center_and_rotate, wrap


# -- event phase -----------------------------------------------------------------

@dataclass
class EventPhaseModel:
    """Phase from upward zero crossings of a fixed linear coordinate."""
    mean: np.ndarray
    direction: np.ndarray
    period: float = float("nan")
    event_times: list = field(default_factory=list)

    @classmethod
    def fit(cls, dataset: TimeSeriesDataset) -> EventPhaseModel:
        """First principal component of the training states."""
        mean, R, _ = center_and_rotate(dataset.x)
        model = cls(mean, R[:, 0].copy())
        times = model.events(dataset)
        gaps = np.concatenate([np.diff(e) for e in times]) if times else []
        if len(gaps):
            model.period = float(np.mean(gaps))
        model.event_times = times
        return model

    def coordinate(self, x):
        return (np.asarray(x, float) - self.mean) @ self.direction

    def events(self, dataset):
        """Per-segment upward crossing times (linear interpolation)."""
        out = []
        for s in dataset.segments:
            c = self.coordinate(s.x)
            i = np.flatnonzero((c[:-1] < 0) & (c[1:] >= 0))
            frac = -c[i] / (c[i + 1] - c[i])
            out.append(s.t[i] + frac * (s.t[i + 1] - s.t[i]))
        return out

    def phase(self, dataset):
        """Per-sample phase in [0, 2 pi); NaN where no events bracket it."""
        parts = []
        for s, ev in zip(dataset.segments, self.events(dataset)):
            ph = np.full(len(s), np.nan)
            if len(ev) >= 2:
                k = np.searchsorted(ev, s.t, side="right") - 1
                ok = (k >= 0) & (k < len(ev) - 1)
                kk = k[ok]
                frac = (s.t[ok] - ev[kk]) / (ev[kk + 1] - ev[kk])
                ph[ok] = np.mod(TWO_PI * frac, TWO_PI)
            parts.append(ph)
        return np.concatenate(parts) if parts else np.empty(0)


def event_phase(dataset: TimeSeriesDataset, model: EventPhaseModel | None = None):
    """Event-based phase of every sample (NaN = undefined); the PC axis is
    fitted on ``dataset`` itself unless a model is given."""
    model = model or EventPhaseModel.fit(dataset)
    return model.phase(dataset)


# -- residual variance -----------------------------------------------------------

def _offset_removed(est, truth):
    d = wrap(np.asarray(est, float) - np.asarray(truth, float))
    mu = np.angle(np.sum(np.exp(1j * d)))
    return wrap(d - mu)


def circular_residual_stats(est, truth, trials=None):
    """``(pooled, per_trial_mean, n)``: variance of wrapped residuals with
    the circular mean removed separately in every trial. NaN marks
    undefined samples; trials with fewer than two samples are dropped."""
    est = np.asarray(est, float).ravel()
    truth = np.asarray(truth, float).ravel()
    trials = np.zeros(len(est), int) if trials is None else np.asarray(trials)
    ok = np.isfinite(est) & np.isfinite(truth)
    pooled, per = [], []
    for tr in dict.fromkeys(trials[ok].tolist()):
        sel = ok & (trials == tr)
        if sel.sum() < 2:
            continue
        r = _offset_removed(est[sel], truth[sel])
        pooled.append(r)
        per.append(float(np.var(r)))
    if not pooled:
        raise TooFewSamples("need at least two defined paired samples")
    allr = np.concatenate(pooled)
    return float(np.var(allr)), float(np.mean(per)), int(len(allr))


def circular_residual_variance(est, truth, trials=None) -> float:
    """Pooled circular residual variance (rad^2)."""
    return circular_residual_stats(est, truth, trials)[0]


# -- comparison harness ------------------------------------------------------------

@dataclass
class PhaseComparisonReport:
    variance: dict            # estimator -> pooled variance
    per_trial: dict           # estimator -> mean of per-trial variances
    counts: dict              # total / defined per estimator / common
    condition: dict = field(default_factory=dict)

    ESTIMATORS = ("event", "form")
    COND = ("D", "init", "system", "phase")

    def rows(self):
        head = list(self.COND) + list(self.ESTIMATORS) \
            + [f"{e}_per_trial" for e in self.ESTIMATORS] \
            + ["n_total"] + [f"n_{e}" for e in self.ESTIMATORS] + ["n_common"]
        vals = [self.condition.get(c, "") for c in self.COND] \
            + [self.variance[e] for e in self.ESTIMATORS] \
            + [self.per_trial[e] for e in self.ESTIMATORS] \
            + [self.counts["total"]] \
            + [self.counts[e] for e in self.ESTIMATORS] + [self.counts["common"]]
        return head, vals

    def to_csv(self, path=None) -> str:
        head, vals = self.rows()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        w.writerow([fmt(v) if isinstance(v, float) else v for v in vals])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_text(self) -> str:
        c = self.condition
        lines = ["D  init   system  phase  | event     form",
                 "%-2s %-6s %-7s %-6s | %-9.4g %-9.4g" % (
                     c.get("D", ""), c.get("init", ""), c.get("system", ""),
                     c.get("phase", ""), self.variance["event"],
                     self.variance["form"]),
                 "per-trial mean          | %-9.4g %-9.4g" % (
                     self.per_trial["event"], self.per_trial["form"]),
                 "samples: total %d, event %d, form %d, common %d" % (
                     self.counts["total"], self.counts["event"],
                     self.counts["form"], self.counts["common"])]
        return "\n".join(lines) + "\n"


@dataclass
class EstimatorConfig:
    fourier_order: int = 6
    poly_order: int = 6
    cycle_order: int = 10
    ridge: float = 1e-8
    zscore: bool = True
    smoother: object = None   # SmootherConfig or None for defaults


def prepare(train: TimeSeriesDataset, test: TimeSeriesDataset, cfg=None):
    """Kalman-smooth datasets lacking velocities; the test set reuses the
    process variances fitted on the training set."""
    from .preprocess import SmootherConfig, fit_smoother, kalman_smooth
    cfg = cfg or EstimatorConfig()
    if train.has_velocities and test.has_velocities:
        return train, test
    sc = fit_smoother(train, cfg.smoother or SmootherConfig())
    tr = train if train.has_velocities else kalman_smooth(train, sc)
    fixed = SmootherConfig(dt=sc.dt, q_pos=sc.q_pos, q_vel=sc.q_vel,
                           r_obs=sc.r_obs)
    te = test if test.has_velocities else kalman_smooth(test, fixed)
    return tr, te


def compare_estimators(train: TimeSeriesDataset, test: TimeSeriesDataset,
                       configs: EstimatorConfig | None = None,
                       condition: dict | None = None, return_models=False):
    """Fit event and form phase on ``train``; score both on ``test`` over the
    samples where both are defined. Each test segment is one trial."""
    from .form import BasisSpec, fit
    from .rectify import fit_limit_cycle
    if not test.has_phase:
        raise MissingLabels("test dataset carries no ground-truth phase")
    cfg = configs or EstimatorConfig()
    tr, te = prepare(train, test, cfg)
    rect = fit_limit_cycle(tr, cfg.cycle_order, zscore=cfg.zscore)
    spec = BasisSpec(cfg.fourier_order, cfg.poly_order, tr.dim - 2)
    form = fit(tr, rect, spec, ridge=cfg.ridge)
    ev = EventPhaseModel.fit(tr)
    truth = te.phase
    est = {"event": ev.phase(te),
           "form": form.phase(te.x, strict=False)}
    trials = te.segment_ids
    common = np.isfinite(truth)
    for v in est.values():
        common &= np.isfinite(v)
    var, per = {}, {}
    for k, v in est.items():
        vv = np.where(common, v, np.nan)
        var[k], per[k], _ = circular_residual_stats(vv, truth, trials)
    counts = {"total": int(len(truth)), "common": int(common.sum())}
    counts.update({k: int(np.isfinite(v).sum()) for k, v in est.items()})
    rep = PhaseComparisonReport(var, per, counts, dict(condition or {}))
    if return_models:
        return rep, {"form": form, "event": ev}
    return rep
