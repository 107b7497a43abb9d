import numpy as np
import pytest

from formphase import kernels
from formphase import _pykernels

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled",
                              reason="compiled kernels not built")


def _series(rng, n=500):
    t = np.arange(n) * 0.01
    return np.sin(3 * t) + 0.05 * rng.standard_normal(n)


@compiled
def test_loglik_backends_agree(rng):
    ys = [_series(rng), _series(rng, 300)]
    a = kernels.kalman_loglik_many(ys, 0.01, 1e-4, 1e-1, 2.5e-3, 1.0, 10.0,
                                   backend="compiled")
    b = kernels.kalman_loglik_many(ys, 0.01, 1e-4, 1e-1, 2.5e-3, 1.0, 10.0,
                                   backend="python")
    assert abs(a - b) <= 1e-10 * abs(a)


@compiled
def test_smooth_backends_agree(rng):
    y = _series(rng)
    a = kernels.kalman_smooth(y, 0.01, 1e-4, 1e-1, 2.5e-3, 1.0, 10.0,
                              backend="compiled")
    b = kernels.kalman_smooth(y, 0.01, 1e-4, 1e-1, 2.5e-3, 1.0, 10.0,
                              backend="python")
    for u, v in zip(a, b):
        assert np.abs(u - v).max() < 1e-12


@compiled
def test_marching_squares_backends_agree(rng):
    F = rng.standard_normal((40, 37))
    F[5, 5] = 0.0
    a = kernels.marching_squares(F, 0.1, backend="compiled")
    b = kernels.marching_squares(F, 0.1, backend="python")
    assert np.array_equal(a[1], b[1])
    assert np.allclose(a[0], b[0], atol=1e-14)


@pytest.mark.parametrize("backend", [None, "python"])
def test_marching_squares_circle(backend):
    u = np.linspace(-1, 1, 61)
    X, Y = np.meshgrid(u, u)
    F = X**2 + Y**2 - 0.5**2
    pts, edges = kernels.marching_squares(F, 0.0, backend=backend)
    assert len(pts) > 20
    r = np.hypot(*(pts[:, :2] * (u[1] - u[0]) - 1).T[::-1])
    assert np.abs(r - 0.5).max() < 0.01
    assert edges.shape == (len(pts), 2)


def test_backend_selection():
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")
    assert kernels.get_backend("python") is _pykernels
