import numpy as np
import pytest

from formphase import BasisSpec, RectificationMap, fit, isochrons
from formphase.errors import ConfigError, EmptyWindow
from formphase.systems import trivial_dataset


@pytest.fixture(scope="module")
def model():
    ds = trivial_dataset(2000, rng=0)
    return fit(ds, RectificationMap.identity(2), BasisSpec(4, 4, 0))


@pytest.mark.parametrize("backend", ["compiled", "python"])
def test_trivial_isochrons_are_rays(model, backend):
    from formphase.kernels import BACKEND
    if backend == "compiled" and BACKEND != "compiled":
        pytest.skip("compiled kernels unavailable")
    levels = [0, np.pi / 2, np.pi, 3 * np.pi / 2]
    win = (-1.4, 1.4, -1.4, 1.4)
    out = isochrons(model, levels, win, grid=(81, 81), backend=backend)
    assert len(out) == 4
    for lv, lines in zip(levels, out):
        assert len(lines) >= 1
        P = np.vstack(lines)
        # every point lies on the ray at angle lv (angle = atan2(x0, x1))
        d = np.array([np.sin(lv), np.cos(lv)])
        perp = P @ np.array([d[1], -d[0]])
        assert np.abs(perp).max() < 1e-3 * 2.8
        assert np.all(P @ d > 0)
        err = np.angle(np.exp(1j * (model.phase(P) - lv)))
        assert np.abs(err).max() < 0.05


def test_empty_levels(model):
    assert isochrons(model, [], (-1, 1, -1, 1)) == []


def test_window_outside_annulus(model):
    with pytest.raises(EmptyWindow):
        isochrons(model, [0.0], (10, 11, 10, 11), grid=(11, 11))


def test_bad_window(model):
    with pytest.raises(ConfigError):
        isochrons(model, [0.0], (1, -1, -1, 1))
