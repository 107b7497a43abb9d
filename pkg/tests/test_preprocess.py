import numpy as np
import pytest
from scipy import signal

from formphase import (FilterBankConfig, Segment, SmootherConfig,
                       TimeSeriesDataset, filter_bank_embed, kalman_smooth,
                       relative_phase, zscore_pcs)
from formphase.errors import (ConfigError, DegenerateData,
                              MismatchedTimestamps, SegmentTooShort,
                              TooFewSpikes)
from formphase.preprocess import _problem, fit_smoother


# -- Kalman smoother ---------------------------------------------------------------

def test_ramp_velocity():
    t = np.arange(200) * 0.05
    out = kalman_smooth(Segment(t, 3 * t[:, None]))
    assert np.abs(out.dx[5:, 0] - 3).max() < 1e-6


def _noisy_sine(seed, n=1000, dt=0.01, sigma=0.05):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * dt
    y = np.sin(2 * np.pi * t) + sigma * rng.standard_normal(n)
    return t, y, 2 * np.pi * np.cos(2 * np.pi * t)


def test_noisy_sine_beats_finite_differences():
    t, y, v = _noisy_sine(0)
    out = kalman_smooth(Segment(t, y[:, None]))
    err_k = np.sqrt(np.mean((out.dx[:, 0] - v) ** 2))
    err_fd = np.sqrt(np.mean((np.gradient(y, t) - v) ** 2))
    assert err_k < err_fd


def test_segment_too_short():
    with pytest.raises(SegmentTooShort):
        kalman_smooth(Segment(np.arange(2.0), np.zeros((2, 1))))


def test_small_observation_noise_reproduces_data():
    t, y, _ = _noisy_sine(1, n=300)
    cfg = SmootherConfig(q_pos=1e-2, q_vel=1.0, r_obs=1e-22)
    out = kalman_smooth(Segment(t, y[:, None]), cfg)
    assert np.abs(out.x[:, 0] - y).max() < 1e-9


def test_likelihood_beats_random_probes():
    t, y, _ = _noisy_sine(2, n=400)
    seg = Segment(t, y[:, None])
    fitted = fit_smoother(seg)
    pb = _problem([seg], fitted)
    best = pb.loglik(fitted.q_pos, fitted.q_vel)
    rng = np.random.default_rng(0)
    lo, hi = fitted.log_range
    for _ in range(25):
        qp = fitted.q_pos * np.exp(rng.uniform(lo, hi) / 2)
        qv = fitted.q_vel * np.exp(rng.uniform(lo, hi) / 2)
        assert best >= pb.loglik(qp, qv) - 1e-9


def test_smoother_config_validation():
    with pytest.raises(ConfigError):
        SmootherConfig(q_pos=-1.0).validate()
    with pytest.raises(ConfigError):
        SmootherConfig(r_obs=0.0).validate()


def test_smoother_records_parameters():
    t, y, _ = _noisy_sine(3, n=200)
    ds = TimeSeriesDataset([Segment(t, np.column_stack([y, -y]))])
    out = kalman_smooth(ds)
    sm = out.meta["smoother"]
    assert sm["q_pos"] > 0 and sm["q_vel"] > 0 and len(sm["r_obs"]) == 2


# -- z-scoring -------------------------------------------------------------------------

def test_zscore_unit_variance_identity(rng):
    x = rng.standard_normal((2000, 2))
    x = (x - x.mean(0))
    x = x @ np.linalg.inv(np.linalg.cholesky(np.cov(x.T, bias=True))).T
    y, zs = zscore_pcs(x)
    assert np.allclose(zs.scale, 1, atol=1e-10)
    assert np.allclose(np.abs(y), np.abs(x @ zs.rotation), atol=1e-10)


def test_zscore_scales(rng):
    t = np.linspace(0, 2 * np.pi, 1000, endpoint=False)
    x = np.column_stack([np.sqrt(2) * 3 * np.sin(t), np.sqrt(2) * 2 * np.cos(t),
                         0.1 * np.sin(3 * t)])
    y, zs = zscore_pcs(x)
    assert np.allclose(zs.scale[:2], [1 / 3, 1 / 2], rtol=1e-10)
    assert zs.scale[2] == 1.0
    assert np.allclose(zs.invert(y), x, atol=1e-12)


def test_zscore_degenerate():
    x = np.column_stack([np.arange(10.0), np.zeros(10)])
    with pytest.raises(DegenerateData):
        zscore_pcs(x)


def test_zscore_dataset_transforms_velocities(rng):
    t = np.linspace(0, 10, 300)
    x = np.column_stack([2 * np.sin(t), np.cos(t)])
    dx = np.column_stack([2 * np.cos(t), -np.sin(t)])
    out, zs = zscore_pcs(TimeSeriesDataset([Segment(t, x, dx)]))
    assert np.allclose(out.dx, (dx @ zs.rotation) * zs.scale)


# -- filter bank --------------------------------------------------------------------

def _bank_response(isi, dt, order=2):
    w = 2 * np.pi / isi * dt
    H = []
    for p in FilterBankConfig().cutoffs(isi):
        b, a = signal.butter(order, 1 / p, fs=1 / dt)
        H.append(signal.freqz(b, a, worN=[w])[1][0])
    return H[0] - H[1], H[1] - H[2]


def test_filter_bank_sinusoid_lag_matches_transfer_oracle():
    dt, isi = 0.01, 5.0
    t = np.arange(0, 40 * isi, dt)
    res = filter_bank_embed(np.sin(2 * np.pi * t / isi), dt,
                            FilterBankConfig(isi=isi, detrend=False))
    E = res.embedded[0][t > 10 * isi]
    tt = t[t > 10 * isi]
    a, b = _bank_response(isi, dt)
    oracle = np.angle(a / b)
    # measured phase of each output from a projection onto exp(i w t)
    z = np.exp(-2j * np.pi * tt / isi)
    measured = np.angle((E[:, 0] @ z) / (E[:, 1] @ z))
    assert abs(np.angle(np.exp(1j * (measured - oracle)))) < 0.01
    # near quadrature: lag is about a quarter period
    lag = abs(oracle) * isi / (2 * np.pi)
    assert 0.75 * isi / 4 < lag < 1.25 * isi / 4
    # amplitude agrees too
    amp = np.abs(E[:, 0] @ z) * 2 / len(tt)
    assert amp == pytest.approx(abs(a), rel=0.01)


def test_filter_bank_constant_signal():
    with pytest.raises(TooFewSpikes):
        filter_bank_embed(np.ones(1000), 0.01)


def _spikes(tau, dt, n_periods=30, jitter=0.0, rng=None):
    t = np.arange(0, n_periods * tau, dt)
    y = np.zeros_like(t)
    for k in range(1, n_periods):
        c = k * tau + (jitter * rng.standard_normal() if jitter else 0.0)
        y += np.exp(-0.5 * ((t - c) / (0.03 * tau)) ** 2)
    return t, y


def test_spike_train_cutoffs_recorded():
    tau, dt = 2.0, 0.01
    _, y = _spikes(tau, dt)
    res = filter_bank_embed(y, dt)
    assert res.isi[0] == pytest.approx(tau, abs=dt)
    assert res.cutoffs[0] == pytest.approx([2 * tau, tau, tau / 2], abs=2 * dt)
    assert res.meta["order"] == 2


def test_filter_bank_linearity(rng):
    dt = 0.01
    a = rng.standard_normal(3000)
    b = rng.standard_normal(3000)
    cfg = FilterBankConfig(isi=1.0, detrend=False)
    ea = filter_bank_embed(a, dt, cfg).embedded[0]
    eb = filter_bank_embed(b, dt, cfg).embedded[0]
    eab = filter_bank_embed(a + b, dt, cfg).embedded[0]
    assert np.abs(eab - ea - eb).max() < 1e-9


def test_filter_bank_coarse_sampling():
    with pytest.raises(ConfigError):
        filter_bank_embed(np.sin(np.arange(100.0)), 1.0,
                          FilterBankConfig(isi=3.0, detrend=False))


# -- relative phase --------------------------------------------------------------------

def test_relative_phase_examples(rng):
    p = np.cumsum(rng.uniform(0, 0.3, 100))
    assert np.allclose(relative_phase([p, p]), 0)
    rp = relative_phase([np.mod(p + np.pi, 2 * np.pi), np.mod(p, 2 * np.pi)])
    assert np.allclose(rp[0], np.pi / 2) and np.allclose(rp[1], -np.pi / 2)
    with pytest.raises(MismatchedTimestamps):
        relative_phase([p, p[:-1]])
    with pytest.raises(MismatchedTimestamps):
        relative_phase([p, p], times=[np.arange(100), np.arange(100) + 1])
    with pytest.raises(ConfigError):
        relative_phase([p])


def test_relative_phase_sums_to_zero(rng):
    P = np.cumsum(rng.uniform(0, 0.5, (5, 200)), axis=1)
    rp = relative_phase(np.mod(P, 2 * np.pi))
    s = rp.sum(axis=0)
    assert np.abs(s).max() <= 5 * 5 * np.finfo(float).eps * np.abs(rp).max()
