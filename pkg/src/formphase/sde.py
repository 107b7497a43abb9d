"""Explicit three-stage stochastic Runge-Kutta for Stratonovich SDEs.

``dx = f(x) dt + G(x) o dW`` is advanced with Kutta's third-order tableau
applied to the combined increment ``f h + G dW``::

    K1 = f(x) h + G(x) dW
    K2 = f(x + K1/2) h + G(x + K1/2) dW
    K3 = f(x - K1 + 2 K2) h + G(x - K1 + 2 K2) dW
    x' = x + (K1 + 4 K2 + K3) / 6

The weights satisfy ``sum b = 1`` and ``sum b_i c_i = 1/2``, which gives the
Stratonovich correction and weak order one; with ``G = 0`` this is the
classical RK3 method.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, NonFinite


def _apply_G(G, x, dW):
    if G is None:
        return 0.0
    return np.einsum("pnm,pm->pn", G(x), dW)


def sde_integrate(field, G, x0, dt: float, t_end: float, rng_seed=None,
                  dW=None, n_noise: int | None = None, sample_every: int = 1,
                  coupled=None):
    """Integrate sample paths.

    ``field(x)`` maps (P, n) -> (P, n); ``G(x)`` maps (P, n) -> (P, n, m) or
    is None for a deterministic run. ``x0`` is (n,) or (P, n). Wiener
    increments are drawn from ``default_rng(rng_seed)`` with shape
    (steps, P, m) unless given explicitly as ``dW``.

    ``coupled(x) -> (f, G)`` may replace the separate callables when the
    drift and diffusion share expensive intermediate results.

    Returns ``(t, X)`` where ``X`` has shape (samples, n) or
    (samples, P, n).
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if t_end < dt:
        raise ConfigError("t_end must be at least dt")
    x0 = np.asarray(x0, float)
    single = x0.ndim == 1
    x = np.atleast_2d(x0).copy()
    P, n = x.shape
    steps = int(round(t_end / dt))
    if coupled is not None:
        def stage(x, w):
            f, g = coupled(x)
            return f * dt + np.einsum("pnm,pm->pn", g, w)
    else:
        def stage(x, w):
            return field(x) * dt + (0.0 if w is None else _apply_G(G, x, w))
    noisy = G is not None or coupled is not None
    if noisy and dW is None:
        if n_noise is None:
            n_noise = (coupled(x)[1] if coupled else G(x)).shape[2]
        rng = np.random.default_rng(rng_seed)
        dW = rng.standard_normal((steps, P, n_noise)) * np.sqrt(dt)
    if dW is not None:
        dW = np.asarray(dW, float)
        if dW.ndim == 2:
            dW = dW[:, None, :]
        if dW.shape[0] < steps:
            raise ConfigError("not enough Wiener increments for the horizon")
    n_out = steps // sample_every + 1
    out = np.empty((n_out, P, n))
    out[0] = x
    k_out = 1
    for k in range(steps):
        w = dW[k] if noisy else None
        k1 = stage(x, w)
        k2 = stage(x + 0.5 * k1, w)
        k3 = stage(x - k1 + 2.0 * k2, w)
        x = x + (k1 + 4.0 * k2 + k3) / 6.0
        if not np.all(np.isfinite(x)):
            raise NonFinite(f"sample path diverged at step {k + 1}")
        if (k + 1) % sample_every == 0:
            out[k_out] = x
            k_out += 1
    t = np.arange(n_out) * dt * sample_every
    return t, (out[:, 0] if single else out)
