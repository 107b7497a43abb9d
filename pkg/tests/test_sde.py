import numpy as np
import pytest

from formphase import sde_integrate
from formphase.errors import ConfigError, NonFinite

A, B = -0.5, 0.3


def gbm_field(x):
    return A * x


def gbm_noise(x):
    return (B * x)[:, :, None]


def strong_error(dt, n_paths, rng, fine=2**-12):
    steps = int(round(1 / fine))
    dW = rng.standard_normal((steps, n_paths, 1)) * np.sqrt(fine)
    W = dW.sum(axis=0)[:, 0]
    k = int(round(dt / fine))
    coarse = dW.reshape(steps // k, k, n_paths, 1).sum(axis=1)
    _, X = sde_integrate(gbm_field, gbm_noise, np.ones((n_paths, 1)), dt, 1.0,
                         dW=coarse)
    exact = np.exp(A + B * W)
    return np.mean(np.abs(X[-1, :, 0] - exact))


def test_deterministic_limit():
    t, x = sde_integrate(lambda x: -x, None, [1.0], 1e-3, 1.0)
    assert abs(x[-1, 0] - np.exp(-1)) < 1e-6
    assert t[-1] == pytest.approx(1.0)


def test_strong_order_small():
    rng = np.random.default_rng(0)
    e = [strong_error(dt, 300, np.random.default_rng(0)) for dt in
         (2**-5, 2**-6, 2**-7)]
    assert e[0] / e[1] >= 1.3 and e[1] / e[2] >= 1.3


def test_weak_mean_small():
    n = 4000
    _, X = sde_integrate(gbm_field, gbm_noise, np.ones((n, 1)), 2**-6, 1.0,
                         rng_seed=1)
    x1 = X[-1, :, 0]
    mean = np.exp(A + B**2 / 2)
    assert abs(x1.mean() - mean) < 3 * x1.std() / np.sqrt(n)


def test_seed_reproducible():
    a = sde_integrate(gbm_field, gbm_noise, np.ones((5, 1)), 0.01, 1.0,
                      rng_seed=3)[1]
    b = sde_integrate(gbm_field, gbm_noise, np.ones((5, 1)), 0.01, 1.0,
                      rng_seed=3)[1]
    assert np.array_equal(a, b)


def test_errors():
    with pytest.raises(ConfigError):
        sde_integrate(gbm_field, None, [1.0], 0.0, 1.0)
    with pytest.raises(ConfigError):
        sde_integrate(gbm_field, None, [1.0], 0.1, 0.01)
    with pytest.raises(NonFinite), np.errstate(over="ignore", invalid="ignore"):
        sde_integrate(lambda x: x**3, None, [10.0], 0.1, 5.0)
