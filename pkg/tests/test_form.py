import numpy as np
import pytest
from scipy.integrate import solve_ivp

from formphase import (BasisSpec, FormPhaseModel, RectificationMap,
                       basis_differential, basis_scalar, dtheta_pairing, fit,
                       fit_form_phase)
from formphase.errors import ConfigError, NotClosed, Underdetermined
from formphase.form import basis_values
from formphase.simgen import SimConfig, generate_dataset, make_oscillator
from formphase.systems import trivial_dataset

from conftest import annulus_points, random_map


def _cyl_point(th, r, z=()):
    return np.array([r * np.sin(th), r * np.cos(th), *z])


# -- basis ----------------------------------------------------------------------

def test_basis_enumeration():
    spec = BasisSpec(3, 2, 1)
    mem = spec.members()
    assert len(mem) == spec.size == 2 * 3 * 7 - 1
    assert (0, 0, 0, "cos") not in mem
    assert len(set(mem)) == len(mem)
    assert not any(k == 0 and kind == "sin" for _, _, k, kind in mem)


def test_basis_scalar_examples():
    spec = BasisSpec(2, 2, 1)
    assert basis_scalar(spec, spec.index(0, 0, 1, "cos"),
                        _cyl_point(0.0, 1.3, [0.4])) == pytest.approx(1.0)
    assert basis_scalar(spec, spec.index(0, 2, 0),
                        _cyl_point(0.8, 1.0, [0.4])) == 0.0
    v = basis_scalar(spec, spec.index(1, 1, 1, "sin"),
                     _cyl_point(np.pi / 2, 2.0, [3.0]))
    assert v == pytest.approx(3.0 * 1.0 * 1.0, abs=1e-12)
    with pytest.raises(IndexError):
        basis_scalar(spec, spec.size, _cyl_point(0, 1, [0]))


def test_basis_differential_dr():
    spec = BasisSpec(1, 1, 0)
    d = basis_differential(spec, spec.index(0, 1, 0), np.array([0.0, 1.0]))
    assert np.allclose(d, [0, 1], atol=1e-15)


def test_basis_differential_dtheta_member():
    spec = BasisSpec(1, 1, 0)
    q = np.array([1.0, 0.0])            # th = pi/2, r = 1
    d = basis_differential(spec, spec.index(0, 0, 1, "cos"), q)
    h = 1e-6
    fd = [(basis_scalar(spec, spec.index(0, 0, 1, "cos"), q + h * e)
           - basis_scalar(spec, spec.index(0, 0, 1, "cos"), q - h * e))
          / (2 * h) for e in np.eye(2)]
    # -sin(th) dth with dth = (q1 dq0 - q0 dq1) / r^2 = -dq1
    assert np.allclose(d, [0.0, 1.0], atol=1e-12)
    assert np.allclose(d, fd, atol=1e-8)


@pytest.mark.parametrize("z_dim", [0, 1, 2])
def test_basis_differential_finite_differences(rng, z_dim):
    spec = BasisSpec(3, 3, z_dim)
    n = z_dim + 2
    h = 1e-6
    for _ in range(10):
        q = np.concatenate([_cyl_point(rng.uniform(-3, 3),
                                       rng.uniform(0.6, 1.5))[:2],
                            rng.standard_normal(z_dim)])
        w = rng.standard_normal(n)
        V = lambda p: basis_values(spec, p)[0]
        fd = (V(q + h * w) - V(q - h * w)) / (2 * h)
        for mu in range(spec.size):
            an = basis_differential(spec, mu, q) @ w
            assert abs(an - fd[mu]) <= 1e-5 * max(1.0, abs(fd[mu]))


def test_dtheta_pairing_examples():
    assert dtheta_pairing([0, 1], [1, 0]) == 1.0
    assert dtheta_pairing([0, 2], [2, 0]) == 1.0
    assert dtheta_pairing([0, 1], [0, 5]) == 0.0


# -- fit -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def trivial():
    ds = trivial_dataset(2000, rng=0)
    rect = RectificationMap.identity(2)
    return ds, fit(ds, rect, BasisSpec(6, 6, 0))


def test_trivial_fit(trivial):
    ds, model = trivial
    assert np.abs(model.m).max() < 1e-6
    assert abs(model.C - 1) < 1e-6


def test_velocity_scaling_doubles_C(trivial):
    from formphase import Segment, TimeSeriesDataset
    ds, model = trivial
    s = ds.segments[0]
    ds2 = TimeSeriesDataset([Segment(s.t, s.x, 2 * s.dx, s.phase)])
    m2 = fit(ds2, model.rect, model.basis)
    assert abs(m2.C - 2 * model.C) < 1e-6
    assert np.abs(m2.m - model.m).max() < 1e-6


def test_fit_underdetermined():
    ds = trivial_dataset(3, rng=1)
    with pytest.raises(Underdetermined):
        fit(ds, RectificationMap.identity(2), BasisSpec(3, 3, 0))


def test_fit_rejects_bad_config(trivial):
    ds, model = trivial
    with pytest.raises(ConfigError):
        fit(ds, model.rect, BasisSpec(2, 2, 1))
    with pytest.raises(ConfigError):
        fit(ds, model.rect, BasisSpec(2, 2, 0), ridge=-1)


def test_trivial_phase_and_prc(trivial):
    ds, model = trivial
    x = ds.x[:50]
    th = np.mod(np.arctan2(x[:, 0], x[:, 1]), 2 * np.pi)
    assert np.abs(np.angle(np.exp(1j * (model.phase(x) - th)))).max() < 1e-5
    ph, cov, pts = model.prc(64)
    r = np.hypot(pts[:, 0], pts[:, 1])
    radial = np.einsum("ni,ni->n", cov, pts / r[:, None])
    tang = np.einsum("ni,ni->n", cov, np.column_stack([pts[:, 1], -pts[:, 0]]))
    assert np.abs(radial).max() < 1e-6
    assert np.abs(tang - 1).max() < 1e-6
    with pytest.raises(ConfigError):
        model.prc(0)


def test_identity_one_form_is_dtheta():
    model = FormPhaseModel(RectificationMap.identity(2), BasisSpec(2, 2, 0),
                           np.zeros(BasisSpec(2, 2, 0).size), 1.0, 1.0)
    x = np.array([[0.3, 0.8], [-1.0, 0.2]])
    r2 = (x**2).sum(axis=1)
    dth = np.column_stack([x[:, 1] / r2, -x[:, 0] / r2])
    assert np.allclose(model.one_form(x), dth, atol=1e-15)


# -- models of random maps ----------------------------------------------------------

def _random_model(rng, dim=3, spec=None):
    rect = random_map(rng, dim)
    spec = spec or BasisSpec(3, 3, dim - 2)
    m = 0.02 * rng.standard_normal(spec.size)
    return FormPhaseModel(rect, spec, m, 1.0, 1.0)


@pytest.mark.parametrize("dim", [2, 3])
def test_pullback_consistency(rng, dim):
    model = _random_model(rng, dim)
    x = annulus_points(model.rect, rng, 50)
    xd = rng.standard_normal(x.shape)
    a = model.pairing(x, xd)
    q = model.rect.rectify(x)
    J = model.rect.rectify_jacobian(x)
    b = np.einsum("ni,ni->n", model.rectified_form(q),
                  np.einsum("nij,nj->ni", J, xd))
    assert np.abs(a - b).max() <= 4 * np.finfo(float).eps * np.abs(b).max()


@pytest.mark.parametrize("dim", [2, 3])
def test_gradient_check(rng, dim):
    model = _random_model(rng, dim)
    x = annulus_points(model.rect, rng, 100)
    w = rng.standard_normal(x.shape)
    h = 1e-6
    fd = np.angle(np.exp(1j * (model.unwrapped_phase(x + h * w)
                               - model.unwrapped_phase(x - h * w)))) / (2 * h)
    an = model.pairing(x, w)
    assert np.all(np.abs(fd - an) <= 1e-4 * np.maximum(1.0, np.abs(an)))


def test_gauge_covariance(rng):
    model = _random_model(rng, 3)
    x = annulus_points(model.rect, rng, 30)
    cov = model.one_form(x)
    d = np.angle(np.exp(1j * (model.phase(x, origin=1.0) - model.phase(x))))
    assert np.allclose(d, -1.0, atol=1e-12)
    shifted = FormPhaseModel(model.rect, model.basis, model.m, model.C + 1.0,
                             model.omega)
    assert np.array_equal(shifted.one_form(x), cov)


def test_phase_definitional_identity(rng):
    model = _random_model(rng, 3)
    x = annulus_points(model.rect, rng, 30)
    q = model.rect.rectify(x)
    s = basis_values(model.basis, q) @ model.m
    direct = np.mod(np.arctan2(q[:, 0], q[:, 1]) + s, 2 * np.pi)
    assert np.allclose(np.exp(1j * model.phase(x)), np.exp(1j * direct),
                       atol=1e-12)


def test_monotone_cycle_phase(rng):
    model = _random_model(rng, 2)
    th, pts = model.rect.cycle_points(400)
    ph = np.unwrap(model.unwrapped_phase(pts))
    assert np.all(np.diff(ph) > 0)


@pytest.mark.parametrize("dim", [2, 3])
def test_loop_integrals(rng, dim):
    model = _random_model(rng, dim)
    _, pts = model.rect.cycle_points(200)
    loop = np.vstack([pts, pts[:1]])
    assert abs(model.loop_integral(loop) - 2 * np.pi) < 1e-6
    c = model.rect.unrectify(_cyl_point(0.4, 1.1, [0.1] * (dim - 2)))
    d = 0.05
    e0, e1 = np.eye(dim)[0] * d, np.eye(dim)[1] * d
    square = np.array([c, c + e0, c + e0 + e1, c + e1, c])
    assert abs(model.loop_integral(square)) < 1e-8
    with pytest.raises(NotClosed):
        model.loop_integral(square[:-1])


def test_serialization_bit_exact(rng, tmp_path):
    model = _random_model(rng, 3)
    p = tmp_path / "m.json"
    model.save(p)
    back = FormPhaseModel.load(p)
    x = annulus_points(model.rect, rng, 40)
    assert np.array_equal(back.phase(x), model.phase(x))
    assert np.array_equal(back.one_form(x), model.one_form(x))
    assert back.to_json() == model.to_json()


def test_phase_advances_along_true_trajectories():
    cfg = SimConfig(dim=2, n_trajectories=10, init_noise=0.1, system_noise=0.0,
                    phase_noise=0.0, store_velocities=True)
    osc = make_oscillator(cfg, 1)
    ds = generate_dataset(cfg, 1, oscillator=osc)
    model = fit_form_phase(ds)
    x0 = osc.state(np.linspace(-3, 3, 5), 1.02)
    sol = solve_ivp(lambda t, y: osc.field(y.reshape(-1, 2)).ravel(),
                    (0, 2 * np.pi), x0.ravel(), t_eval=np.linspace(0, 6, 13),
                    rtol=1e-10, atol=1e-12)
    X = sol.y.T.reshape(len(sol.t), -1, 2)
    ph = np.array([model.unwrapped_phase(X[k]) for k in range(len(sol.t))])
    drift = np.angle(np.exp(1j * (ph - ph[0] - model.omega * sol.t[:, None])))
    assert np.abs(drift).max() < 0.05
