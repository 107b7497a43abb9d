import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def circle_dataset(n=400, periods=3.0, radius=(1.0, 1.0), rate=1.0, dim=2,
                   z=None):
    """Closed curve (a sin t, b cos t[, z(t)]) traversed at ``rate``."""
    from formphase import Segment, TimeSeriesDataset
    t = np.linspace(0, periods * 2 * np.pi / rate, n, endpoint=False)
    a, b = radius
    cols = [a * np.sin(rate * t), b * np.cos(rate * t)]
    dcols = [a * rate * np.cos(rate * t), -b * rate * np.sin(rate * t)]
    for k in range(dim - 2):
        f = z[k] if z else (lambda s: 0.0 * s)
        cols.append(f(rate * t))
        h = 1e-6
        dcols.append(rate * (f(rate * t + h) - f(rate * t - h)) / (2 * h))
    return TimeSeriesDataset([Segment(t, np.column_stack(cols),
                                      np.column_stack(dcols))])


def random_map(rng, dim=2, order=3, amp=0.05):
    """A valid rectification map with small random Fourier profiles."""
    from formphase import FourierSeries, LimitCycleModel, RectificationMap
    R, _ = np.linalg.qr(rng.standard_normal((dim, dim)))

    def series(d, const):
        return FourierSeries(np.full(d, const),
                             amp * rng.standard_normal((order, d)),
                             amp * rng.standard_normal((order, d)))
    r_hat = series(1, 1.0)
    z_hat = series(dim - 2, 0.0)
    phi = series(1, 0.0)
    cyc = LimitCycleModel(r_hat, z_hat, phi, 2 * np.pi)
    return RectificationMap(rng.standard_normal(dim), R,
                            rng.uniform(0.5, 2.0, dim), cyc)


def annulus_points(rmap, rng, n=200, r=(0.7, 1.3)):
    """Original-coordinate points whose rectified radius lies in ``r``."""
    th = rng.uniform(-np.pi, np.pi, n)
    rr = rng.uniform(*r, n)
    q = np.column_stack([rr * np.sin(th), rr * np.cos(th),
                         0.2 * rng.standard_normal((n, rmap.dim - 2))])
    return rmap.unrectify(q)


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE_LINES = []


def report(number, passed, detail):
    """Record and print one acceptance verdict line."""
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
