"""Reference oscillators with known structure, and a forward-integration
phase response oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .dataset import Segment, TimeSeriesDataset
from .rectify import TWO_PI

TIGHT = dict(method="DOP853", rtol=1e-11, atol=1e-12)


# -- trivial oscillator ----------------------------------------------------------

def trivial_field(x):
    """theta' = 1, r' = 1 - r in the plane with theta = atan2(x0, x1)."""
    x = np.atleast_2d(np.asarray(x, float))
    r = np.hypot(x[:, 0], x[:, 1])
    th = np.arctan2(x[:, 0], x[:, 1])
    rd = 1.0 - r
    # d/dt (r sin th, r cos th)
    return np.column_stack([rd * np.sin(th) + r * np.cos(th),
                            rd * np.cos(th) - r * np.sin(th)])


def trivial_dataset(n=2000, r_range=(0.5, 1.5), rng=None):
    """Noiseless annulus samples of the trivial oscillator with exact
    velocities and phase labels (phase = polar angle)."""
    rng = np.random.default_rng(rng)
    th = rng.uniform(-np.pi, np.pi, n)
    r = rng.uniform(*r_range, n)
    x = np.column_stack([r * np.sin(th), r * np.cos(th)])
    return TimeSeriesDataset([Segment(np.zeros(n), x, trivial_field(x),
                                      np.mod(th, TWO_PI))],
                             {"system": "trivial"})


# -- FitzHugh-Nagumo ---------------------------------------------------------------

@dataclass(frozen=True)
class FitzHughNagumo:
    """v' = v - v^3/3 - w + I,  w' = eps (v + a - b w)."""
    a: float = 0.7
    b: float = 0.8
    eps: float = 0.08
    I: float = 0.5

    def field(self, x):
        x = np.asarray(x, float)
        v, w = x[..., 0], x[..., 1]
        return np.stack([v - v**3 / 3.0 - w + self.I,
                         self.eps * (v + self.a - self.b * w)], axis=-1)

    def ode(self, t, y):
        return self.field(y.reshape(-1, 2)).ravel()

    def limit_cycle(self, n_samples=2000, transient=400.0):
        """One period of the attracting cycle, starting at the upward
        crossing of ``v = 0``. Returns ``(period, t, points)``."""
        y0 = solve_ivp(self.ode, (0, transient), [0.0, 0.0], **TIGHT).y[:, -1]

        def up(t, y):
            return y[0]
        up.direction = 1.0
        sol = solve_ivp(self.ode, (0, 200.0), y0, events=up, **TIGHT)
        e = sol.y_events[0]
        start = e[0]
        sol = solve_ivp(self.ode, (0, 200.0), start, events=up,
                        dense_output=True, **TIGHT)
        tev = sol.t_events[0]
        period = float(tev[tev > 1.0][0])
        t = np.linspace(0, period, n_samples, endpoint=False)
        return period, t, sol.sol(t).T


# -- forward-integration PRC oracle --------------------------------------------------

class CycleClock:
    """Asymptotic phase of states close to a known periodic orbit."""

    def __init__(self, ode, start, period, n_table=4000):
        self.ode = ode
        self.period = float(period)
        sol = solve_ivp(ode, (0, period), start, dense_output=True, **TIGHT)
        self._sol = sol
        self._t = np.linspace(0, period, n_table, endpoint=False)
        self._pts = sol.sol(self._t).T

    def time_on_cycle(self, x):
        """Cycle time of the orbit point nearest each row of ``x``."""
        x = np.atleast_2d(x)
        d = ((x[:, None, :] - self._pts[None]) ** 2).sum(-1)
        t = self._t[np.argmin(d, axis=1)]
        # refine: Newton on <p(t) - x, p'(t)> = 0
        for _ in range(6):
            p = self._sol.sol(np.mod(t, self.period)).T
            v = np.array([self.ode(0, pi) for pi in p])
            acc = np.array([self._dv(pi, vi) for pi, vi in zip(p, v)])
            g = np.einsum("ni,ni->n", p - x, v)
            dg = np.einsum("ni,ni->n", v, v) + np.einsum("ni,ni->n", p - x, acc)
            t = t - g / dg
        return np.mod(t, self.period)

    def _dv(self, p, v, h=1e-6):
        return (self.ode(0, p + h * v) - self.ode(0, p - h * v)) / (2 * h)


def forward_prc(ode, period, cycle_times, cycle_pts, delta=1e-3, n_periods=20,
                clock=None):
    """Phase response by finite perturbation and forward integration.

    ``ode(t, y)`` must accept several states stacked in one flat vector;
    ``cycle_pts[i]`` is the orbit point ``cycle_times[i]`` after
    ``cycle_pts[0]``. Each cycle point is displaced by ``+-delta`` along every coordinate, all
    copies are integrated for ``n_periods`` periods, and the asymptotic
    phase shift is read off against the unperturbed cycle. Returns (N, n)
    in radians per state unit.
    """
    pts = np.atleast_2d(cycle_pts)
    N, n = pts.shape
    clock = clock or CycleClock(ode, pts[0], period)
    starts = []
    for k in range(n):
        for sgn in (1.0, -1.0):
            p = pts.copy()
            p[:, k] += sgn * delta
            starts.append(p)
    Y0 = np.concatenate(starts)
    T = n_periods * period

    # ``ode`` is vectorised over stacked states; integrate in blocks so
    # the adaptive step of one copy does not dictate all others
    out = np.empty_like(Y0)
    chunk = 64
    for i in range(0, len(Y0), chunk):
        blk = Y0[i:i + chunk]
        sol = solve_ivp(ode, (0, T), blk.ravel(), **TIGHT)
        out[i:i + chunk] = sol.y[:, -1].reshape(-1, n)
    tend = clock.time_on_cycle(out)
    t0 = np.asarray(cycle_times, float) - float(cycle_times[0])
    ref = np.mod(t0 + T, period)
    shift = (tend - np.tile(ref, 2 * n) + 0.5 * period) % period - 0.5 * period
    shift = shift.reshape(n, 2, N)
    return (TWO_PI / period) * (shift[:, 0] - shift[:, 1]).T / (2 * delta)
