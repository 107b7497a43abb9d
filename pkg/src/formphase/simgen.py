"""Randomised oscillators with exactly known asymptotic phase.

A Floquet core (``th' = 1`` plus an affine contraction in ``(r - 1, p)``)
is wound around the unit circle in the first two coordinates and pushed
forward through a chain of invertible H-maps. Because every map has a
closed-form inverse and tangent map, the ground-truth phase of any state is
the angle of its preimage.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Segment, TimeSeriesDataset
from .errors import (BadShapeParameter, ConfigError, NonInvertibleAffine,
                     OriginSingularity)
from .rectify import TWO_PI, center_and_rotate
from .sde import sde_integrate


# -- Floquet core ------------------------------------------------------------

def wind(x):
    """``(theta, r, p)`` with ``theta = atan2(x_0, x_1)``."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    r = np.hypot(x2[:, 0], x2[:, 1])
    if np.any(r == 0):
        raise OriginSingularity("polar decomposition undefined at the axis")
    th = np.arctan2(x2[:, 0], x2[:, 1])
    p = x2[:, 2:]
    if single:
        return float(th[0]), float(r[0]), p[0]
    return th, r, p


def unwind(th, r, p=None):
    th = np.asarray(th, float)
    r = np.asarray(r, float)
    single = th.ndim == 0
    th, r = np.atleast_1d(th), np.atleast_1d(r)
    if p is None:
        p = np.zeros((th.size, 0))
    p = np.asarray(p, float).reshape(th.size, -1)
    x = np.column_stack([r * np.sin(th), r * np.cos(th), p])
    return x[0] if single else x


@dataclass(frozen=True)
class FloquetSystem:
    beta: float
    c_r: np.ndarray
    gamma: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        ev = np.linalg.eigvals(self.transverse_matrix)
        if np.any(ev.real >= 0):
            raise ConfigError(f"transverse dynamics not contracting: {ev}")

    @property
    def dim(self) -> int:
        return len(self.c_r) + 2

    @property
    def transverse_matrix(self) -> np.ndarray:
        k = len(self.c_r)
        T = np.zeros((k + 1, k + 1))
        T[0, 0] = self.beta
        T[0, 1:] = self.c_r
        T[1:, 0] = self.gamma
        T[1:, 1:] = self.M
        return T

    @property
    def homogeneous_matrix(self) -> np.ndarray:
        """``[th', r', p', 0] = Mh @ [th, r, p, 1]``."""
        n = self.dim
        Mh = np.zeros((n + 1, n + 1))
        T = self.transverse_matrix
        Mh[0, n] = 1.0
        Mh[1:n, 1:n] = T
        Mh[1:n, n] = -T[:, 0]
        return Mh

    def polar_field(self, th, r, p):
        th = np.asarray(th, float)
        r = np.asarray(r, float)
        p = np.asarray(p, float).reshape(r.shape + (len(self.c_r),))
        dth = np.ones_like(th)
        dr = self.beta * (r - 1.0) + p @ self.c_r
        dp = np.multiply.outer(r - 1.0, self.gamma) + p @ self.M.T
        return dth, dr, dp

    def cartesian_field(self, u):
        """Floquet field expressed in wound Cartesian coordinates."""
        u = np.atleast_2d(u)
        th, r, p = wind(u)
        dth, dr, dp = self.polar_field(th, r, p)
        s, c = np.sin(th), np.cos(th)
        out = np.empty_like(u)
        out[:, 0] = dr * s + r * c * dth
        out[:, 1] = dr * c - r * s * dth
        out[:, 2:] = dp
        return out

    def theta_direction(self, u):
        """``d u / d theta`` at wound Cartesian states."""
        u = np.atleast_2d(u)
        out = np.zeros_like(u)
        out[:, 0] = u[:, 1]
        out[:, 1] = -u[:, 0]
        return out

    @classmethod
    def random(cls, dim: int, rng, rate_range=(-3.0, -0.3),
               imag_range=(0.2, 2.0), complex_pairs: bool = True):
        if dim < 2:
            raise ConfigError("dimension must be at least 2")
        k = dim - 1
        lo, hi = rate_range
        blocks = []
        remaining = k
        while remaining:
            if complex_pairs and remaining >= 2 and rng.random() < 0.5:
                a = rng.uniform(lo, hi)
                b = rng.uniform(*imag_range)
                blocks.append(np.array([[a, -b], [b, a]]))
                remaining -= 2
            else:
                blocks.append(np.array([[rng.uniform(lo, hi)]]))
                remaining -= 1
        D = np.zeros((k, k))
        i = 0
        for blk in blocks:
            s = blk.shape[0]
            D[i:i + s, i:i + s] = blk
            i += s
        V = random_affine(k, rng, sv_range=(0.7, 1.4))[0]
        T = V @ D @ np.linalg.inv(V)
        return cls(float(T[0, 0]), T[0, 1:].copy(), T[1:, 0].copy(),
                   T[1:, 1:].copy())


def floquet_field(sys: FloquetSystem, th, r, p):
    return sys.polar_field(th, r, p)


# -- diffeomorphisms ---------------------------------------------------------

def random_affine(n, rng, sv_range=(0.5, 2.0), offset_scale=0.0):
    """Gaussian matrix with singular values clipped into ``sv_range``."""
    G = rng.standard_normal((n, n))
    U, s, Vt = np.linalg.svd(G)
    s = np.clip(s, *sv_range)
    A = (U * s) @ Vt
    b = offset_scale * rng.standard_normal(n)
    return A, b


@dataclass(frozen=True)
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        s = np.linalg.svd(self.A, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise NonInvertibleAffine("affine matrix is singular")

    @property
    def dim(self):
        return self.A.shape[0]

    def forward(self, u):
        return np.atleast_2d(u) @ self.A.T + self.b

    def inverse(self, v):
        return np.linalg.solve(self.A, (np.atleast_2d(v) - self.b).T).T

    def jacobian(self, u):
        u = np.atleast_2d(u)
        return np.broadcast_to(self.A, (u.shape[0],) + self.A.shape)

    def to_dict(self):
        return {"type": "affine", "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class HMap:
    """``(x, y) -> (g_X(x) + f(g_Y(y)), g_Y(y))`` with affine ``g_X, g_Y``.

    ``f(y) = m (beta + 2) rho(y) P y / (rho(y)**2 + beta rho(y) + 1)`` with
    ``rho(y) = y^T A y``; ``P`` (D_X x D_Y) has ``P_ij = 1`` iff
    ``i == j (mod D_X)``.
    """

    gx: AffineMap
    gy: AffineMap
    A: np.ndarray
    m: float
    beta: float

    def __post_init__(self):
        if self.beta <= -2:
            raise BadShapeParameter("shape parameter must exceed -2")
        ev = np.linalg.eigvalsh(self.A)
        if np.any(ev <= 0):
            raise ConfigError("A must be positive definite")

    @property
    def dx(self):
        return self.gx.dim

    @property
    def dy(self):
        return self.gy.dim

    @property
    def dim(self):
        return self.dx + self.dy

    @property
    def P(self):
        i = np.arange(self.dx)[:, None]
        j = np.arange(self.dy)[None, :]
        return (i % self.dx == j % self.dx).astype(float)

    def _scalar(self, rho):
        den = rho**2 + self.beta * rho + 1.0
        s = self.m * (self.beta + 2.0) * rho / den
        ds = self.m * (self.beta + 2.0) * (1.0 - rho**2) / den**2
        return s, ds

    def f(self, y):
        y = np.atleast_2d(y)
        rho = np.einsum("ni,ij,nj->n", y, self.A, y)
        s, _ = self._scalar(rho)
        return s[:, None] * (y @ self.P.T)

    def f_jacobian(self, y):
        y = np.atleast_2d(y)
        rho = np.einsum("ni,ij,nj->n", y, self.A, y)
        s, ds = self._scalar(rho)
        Py = y @ self.P.T
        grad = 2.0 * (y @ self.A)
        return (s[:, None, None] * self.P
                + ds[:, None, None] * Py[:, :, None] * grad[:, None, :])

    def forward(self, u):
        u = np.atleast_2d(u)
        x, y = u[:, :self.dx], u[:, self.dx:]
        yt = self.gy.forward(y)
        return np.hstack([self.gx.forward(x) + self.f(yt), yt])

    def inverse(self, v):
        v = np.atleast_2d(v)
        xt, yt = v[:, :self.dx], v[:, self.dx:]
        return np.hstack([self.gx.inverse(xt - self.f(yt)),
                          self.gy.inverse(yt)])

    def jacobian(self, u):
        u = np.atleast_2d(u)
        N = u.shape[0]
        yt = self.gy.forward(u[:, self.dx:])
        J = np.zeros((N, self.dim, self.dim))
        J[:, :self.dx, :self.dx] = self.gx.A
        J[:, :self.dx, self.dx:] = self.f_jacobian(yt) @ self.gy.A
        J[:, self.dx:, self.dx:] = self.gy.A
        return J

    def to_dict(self):
        return {"type": "hmap", "gx": self.gx.to_dict(), "gy": self.gy.to_dict(),
                "A": self.A.tolist(), "m": self.m, "beta": self.beta}

    @classmethod
    def random(cls, n, rng, dx=None, amplitude=(0.05, 0.2),
               beta_range=(-1.9, 0.0)):
        if dx is None:
            dx = int(rng.integers(1, n))
        dy = n - dx
        gx = AffineMap(*random_affine(dx, rng, (0.8, 1.25), 0.1))
        gy = AffineMap(*random_affine(dy, rng, (0.8, 1.25), 0.1))
        Q, _ = np.linalg.qr(rng.standard_normal((dy, dy)))
        A = (Q * rng.uniform(0.95, 1.05, dy)) @ Q.T
        m = float(rng.uniform(*amplitude) * rng.choice([-1.0, 1.0]))
        beta = float(rng.uniform(*beta_range))
        return cls(gx, gy, A, m, beta)


hmap_forward = HMap.forward
hmap_inverse = HMap.inverse
hmap_jacobian = HMap.jacobian


@dataclass(frozen=True)
class DiffeoChain:
    maps: tuple = ()

    def forward(self, u):
        u = np.atleast_2d(np.asarray(u, float))
        for mp in self.maps:
            u = mp.forward(u)
        return u

    def inverse(self, v):
        v = np.atleast_2d(np.asarray(v, float))
        for mp in reversed(self.maps):
            v = mp.inverse(v)
        return v

    def jacobian(self, u):
        """Tangent map at ``u``, shape (N, n, n)."""
        u = np.atleast_2d(np.asarray(u, float))
        J = np.broadcast_to(np.eye(u.shape[1]), (u.shape[0], u.shape[1],
                                                  u.shape[1])).copy()
        for mp in self.maps:
            J = mp.jacobian(u) @ J
            u = mp.forward(u)
        return J

    def forward_with_jacobian(self, u):
        u = np.atleast_2d(np.asarray(u, float))
        J = np.broadcast_to(np.eye(u.shape[1]), (u.shape[0], u.shape[1],
                                                  u.shape[1])).copy()
        for mp in self.maps:
            J = mp.jacobian(u) @ J
            u = mp.forward(u)
        return u, J

    def to_dict(self):
        return {"maps": [mp.to_dict() for mp in self.maps]}

    @classmethod
    def random(cls, n, rng, n_hmaps=3):
        maps = []
        for k in range(n_hmaps):
            if k:
                maps.append(AffineMap(*random_affine(n, rng, (0.5, 2.0), 0.1)))
            maps.append(HMap.random(n, rng))
        return cls(tuple(maps))


def chain_pushforward_field(h: DiffeoChain, base_field, x):
    """``Dh(h^-1 x) base_field(h^-1 x)``."""
    u = h.inverse(x)
    return np.einsum("nij,nj->ni", h.jacobian(u), base_field(u))


def noise_matrix(g: DiffeoChain, x, scale: float):
    """``scale * Dg(x)^-1``, shape (N, n, n)."""
    J = g.jacobian(x)
    return scale * np.linalg.inv(J)


# -- ground-truth oscillator -------------------------------------------------

@dataclass(frozen=True)
class GroundTruthOscillator:
    floquet: FloquetSystem
    h: DiffeoChain
    g: DiffeoChain
    noise_scale: float = 0.0
    phase_noise: float = 0.0
    init_noise: float = 0.0

    omega = 1.0

    @property
    def dim(self) -> int:
        return self.floquet.dim

    @property
    def period(self) -> float:
        return TWO_PI

    def field(self, x):
        return chain_pushforward_field(self.h, self.floquet.cartesian_field, x)

    def noise(self, x):
        """Diffusion matrix ``[system | phase]``, shape (N, n, n + 1)."""
        x = np.atleast_2d(x)
        N, n = x.shape
        G = np.zeros((N, n, n + 1))
        if self.noise_scale:
            G[:, :, :n] = noise_matrix(self.g, x, self.noise_scale)
        if self.phase_noise:
            u = self.h.inverse(x)
            e_th = self.floquet.theta_direction(u)
            G[:, :, n] = self.phase_noise * np.einsum(
                "nij,nj->ni", self.h.jacobian(u), e_th)
        return G

    def drift_diffusion(self, x):
        """``(field(x), noise(x))`` sharing one inversion of the state chain."""
        x = np.atleast_2d(x)
        N, n = x.shape
        u = self.h.inverse(x)
        Jh = self.h.jacobian(u)
        f = np.einsum("nij,nj->ni", Jh, self.floquet.cartesian_field(u))
        G = np.zeros((N, n, n + 1))
        if self.noise_scale:
            G[:, :, :n] = noise_matrix(self.g, x, self.noise_scale)
        if self.phase_noise:
            G[:, :, n] = self.phase_noise * np.einsum(
                "nij,nj->ni", Jh, self.floquet.theta_direction(u))
        return f, G

    def phase(self, x):
        """Exact asymptotic phase, in (-pi, pi]."""
        single = np.ndim(x) == 1
        th, _, _ = wind(self.h.inverse(x))
        return float(th[0]) if single else th

    def state(self, th, r=1.0, p=None):
        """Original-coordinate state with Floquet coordinates ``(th, r, p)``."""
        th = np.atleast_1d(np.asarray(th, float))
        r = np.broadcast_to(np.asarray(r, float), th.shape)
        if p is None:
            p = np.zeros((th.size, self.dim - 2))
        return self.h.forward(unwind(th, r, p))

    def cycle(self, n_samples=512):
        th = np.linspace(-np.pi, np.pi, n_samples, endpoint=False)
        return th, self.state(th)

    def to_dict(self):
        f = self.floquet
        return {"floquet": {"beta": f.beta, "c_r": f.c_r.tolist(),
                            "gamma": f.gamma.tolist(), "M": f.M.tolist()},
                "h": self.h.to_dict(), "g": self.g.to_dict(),
                "noise_scale": self.noise_scale,
                "phase_noise": self.phase_noise,
                "init_noise": self.init_noise}


def ground_truth_phase(osc: GroundTruthOscillator, x):
    return osc.phase(x)


def cycle_is_rectifiable(osc: GroundTruthOscillator, n_samples=720,
                         min_radius=0.8, max_rate_ratio=2.5) -> bool:
    """The PCA-plane projection of the true cycle winds once, monotonically,
    close to round (``min r / median r >= min_radius``) and at a roughly
    even angular rate (``max / min`` rate at most ``max_rate_ratio``)."""
    _, pts = osc.cycle(n_samples)
    try:
        _, _, y = center_and_rotate(pts)
    except Exception:
        return False
    y = y[:, :2] / y[:, :2].std(axis=0)
    r = np.hypot(y[:, 0], y[:, 1])
    if r.min() < min_radius * np.median(r):
        return False
    d = np.diff(np.unwrap(np.arctan2(y[:, 0], y[:, 1])))
    d = d * np.sign(d.sum())
    if np.any(d <= 0):
        return False
    return bool(d.max() <= max_rate_ratio * d.min())


def random_oscillator(dim, rng, n_hmaps=3, noise_hmaps=2, noise_scale=0.0,
                      phase_noise=0.0, init_noise=0.0, max_tries=200):
    """Draw oscillators until the true cycle is rectifiable by PCA."""
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        fl = FloquetSystem.random(dim, rng)
        h = DiffeoChain.random(dim, rng, n_hmaps)
        g = DiffeoChain.random(dim, rng, noise_hmaps)
        osc = GroundTruthOscillator(fl, h, g, noise_scale, phase_noise,
                                    init_noise)
        if cycle_is_rectifiable(osc):
            return osc
    raise ConfigError("could not draw a rectifiable oscillator")


# -- datasets ----------------------------------------------------------------

@dataclass
class SimConfig:
    dim: int = 2
    n_trajectories: int = 20
    duration: float = 10 * np.pi
    dt: float = 0.01
    sample_every: int = 5
    init_noise: float = 0.1
    system_noise: float = 0.01
    phase_noise: float = 0.1
    n_hmaps: int = 3
    noise_hmaps: int = 2
    store_velocities: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("dim must be at least 2")
        if self.n_trajectories < 1 or self.sample_every < 1:
            raise ConfigError("trajectory count and stride must be positive")
        if self.dt <= 0 or self.duration < self.dt:
            raise ConfigError("need 0 < dt <= duration")
        if min(self.init_noise, self.system_noise, self.phase_noise) < 0:
            raise ConfigError("noise levels must be nonnegative")
        if self.n_hmaps < 0 or self.noise_hmaps < 0:
            raise ConfigError("chain lengths must be nonnegative")

    def to_dict(self):
        return asdict(self)


# rows of the residual-variance table: (D, initial, system, phase)
TABLE_ROWS = [
    (2, 0.1, 0.01, 0.1), (2, 0.2, 0.01, 0.1), (2, 0.1, 0.02, 0.1),
    (2, 0.1, 0.01, 0.2),
    (3, 0.066, 0.0066, 0.066), (3, 0.133, 0.0066, 0.066),
    (3, 0.066, 0.0133, 0.066), (3, 0.066, 0.0066, 0.133),
    (8, 0.025, 0.0025, 0.025), (8, 0.05, 0.0025, 0.025),
    (8, 0.025, 0.005, 0.025), (8, 0.025, 0.0025, 0.05),
]
PRESETS = {f"table1-row{k + 1}": dict(zip(
    ("dim", "init_noise", "system_noise", "phase_noise"), row))
    for k, row in enumerate(TABLE_ROWS)}


def preset_config(name: str, **overrides) -> SimConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from "
                          f"{', '.join(PRESETS)}")
    return SimConfig(**{**PRESETS[name], **overrides})


ROLE_SYSTEM, ROLE_TRAIN, ROLE_TEST = 0, 1, 2


def _stream(seed, role, idx=0):
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(role, idx)))


def make_oscillator(config: SimConfig, seed: int) -> GroundTruthOscillator:
    return random_oscillator(config.dim, _stream(seed, ROLE_SYSTEM),
                             config.n_hmaps, config.noise_hmaps,
                             config.system_noise, config.phase_noise,
                             config.init_noise)


def max_threads() -> int:
    env = os.environ.get("FORMPHASE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("FORMPHASE_THREADS must be an integer")
    return min(4, os.cpu_count() or 1)


BATCH = 32


def _simulate_batch(osc, config, rngs):
    """Integrate trajectories jointly; each keeps its own RNG stream."""
    n = osc.dim
    steps = int(round(config.duration / config.dt))
    x0, dW = [], []
    for rng in rngs:
        th0 = rng.uniform(-np.pi, np.pi)
        dr0 = config.init_noise * rng.standard_normal()
        p0 = config.init_noise * rng.standard_normal(n - 2)
        x0.append(osc.state(th0, 1.0 + dr0, p0[None, :])[0])
        dW.append(rng.standard_normal((steps, n + 1)) * np.sqrt(config.dt))
    x0 = np.array(x0)
    dW = np.stack(dW, axis=1)
    noisy = config.system_noise > 0 or config.phase_noise > 0
    if noisy:
        t, X = sde_integrate(None, None, x0, config.dt, config.duration,
                             dW=dW, sample_every=config.sample_every,
                             coupled=osc.drift_diffusion)
    else:
        t, X = sde_integrate(osc.field, None, x0, config.dt, config.duration,
                             sample_every=config.sample_every)
    segs = []
    for k in range(len(rngs)):
        Xk = X[:, k]
        phase = np.mod(osc.phase(Xk), TWO_PI)
        dx = osc.field(Xk) if config.store_velocities else None
        segs.append(Segment(t, Xk, dx, phase))
    return segs


def generate_dataset(config: SimConfig, rng_seed: int, role: int = ROLE_TRAIN,
                     oscillator: GroundTruthOscillator | None = None
                     ) -> TimeSeriesDataset:
    """Sample paths with exact ground-truth phase labels.

    Trajectory ``k`` draws from an RNG stream keyed by ``(seed, role, k)``
    and batches have a fixed size, so the output does not depend on the
    thread count.
    """
    osc = oscillator if oscillator is not None else make_oscillator(
        config, rng_seed)
    osc = GroundTruthOscillator(osc.floquet, osc.h, osc.g, config.system_noise,
                                config.phase_noise, config.init_noise)
    rngs = [_stream(rng_seed, role, k) for k in range(config.n_trajectories)]
    batches = [rngs[i:i + BATCH] for i in range(0, len(rngs), BATCH)]
    with ThreadPoolExecutor(max_workers=max_threads()) as pool:
        parts = list(pool.map(lambda b: _simulate_batch(osc, config, b),
                              batches))
    segs = [s for part in parts for s in part]
    meta = {"config": config.to_dict(), "seed": int(rng_seed), "role": role}
    return TimeSeriesDataset(segs, meta)


def simulate(config: SimConfig, seed: int):
    """One random oscillator with independent train and test sample sets."""
    osc = make_oscillator(config, seed)
    train = generate_dataset(config, seed, ROLE_TRAIN, osc)
    test = generate_dataset(config, seed, ROLE_TEST, osc)
    return osc, train, test
