"""Series estimate of the temporal 1-form in rectified coordinates.

The form is ``dth + sum_mu m_mu dv_mu`` with scalar basis functions
``v_(i,j,k) = xi_i(z) rho_j(r) u_k(th)``:

* ``xi_0 = 1``, ``xi_i = z_i`` (first order out of the circulation plane),
* ``rho_j = (r - 1)**j``,
* ``u_k`` is ``cos(k th)`` or ``sin(k th)`` (kept as separate members).

All ``dv_mu`` are exact, so the loop integral around the cycle comes from
the ``dth`` term alone and equals ``2 pi``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataset import TimeSeriesDataset
from .errors import (ConfigError, IllConditioned, NotClosed,
                     OriginSingularity, Underdetermined)
from .rectify import TWO_PI, RectificationMap, fit_limit_cycle

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
CONSISTENCY_WARN = 0.05


@dataclass(frozen=True)
class BasisSpec:
    fourier_order: int = 6
    poly_order: int = 6
    z_dim: int = 0

    def __post_init__(self):
        if self.fourier_order < 0 or self.poly_order < 1 or self.z_dim < 0:
            raise ConfigError(f"invalid basis orders {self}")

    @property
    def shape(self):
        return (self.z_dim + 1, self.poly_order + 1, 2 * self.fourier_order + 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) - 1

    def members(self) -> list[tuple[int, int, int, str]]:
        """Enumeration order: ``i`` outermost, then ``j``, then harmonic.

        Harmonic slot 0 is the constant ``u_0 = 1``; slots ``2k - 1`` and
        ``2k`` are ``cos(k th)`` and ``sin(k th)``. The global constant
        ``(0, 0, 0)`` is excluded.
        """
        out = []
        for i in range(self.z_dim + 1):
            for j in range(self.poly_order + 1):
                out.append((i, j, 0, "cos"))
                for k in range(1, self.fourier_order + 1):
                    out.append((i, j, k, "cos"))
                    out.append((i, j, k, "sin"))
        return out[1:]

    def index(self, i, j, k, kind="cos") -> int:
        return self.members().index((i, j, k, kind if k else "cos"))


def _cyl(q, strict=True):
    q = np.atleast_2d(np.asarray(q, float))
    r = np.hypot(q[:, 0], q[:, 1])
    if np.any(r == 0):
        if strict:
            raise OriginSingularity("rectified state lies on the axis")
        r = np.where(r == 0, np.nan, r)
    th = np.arctan2(q[:, 0], q[:, 1])
    return q, th, r


def _factors(spec: BasisSpec, th, r, z):
    """Per-point factor tables for xi, rho, u and their derivatives."""
    N = th.shape[0]
    xi = np.ones((N, spec.z_dim + 1))
    xi[:, 1:] = z[:, :spec.z_dim]
    j = np.arange(spec.poly_order + 1)
    dr1 = (r - 1.0)[:, None]
    rho = dr1 ** j
    drho = np.zeros_like(rho)
    drho[:, 1:] = j[1:] * dr1 ** (j[1:] - 1)
    K = spec.fourier_order
    u = np.ones((N, 2 * K + 1))
    du = np.zeros_like(u)
    if K:
        k = np.arange(1, K + 1)
        kt = th[:, None] * k
        c, s = np.cos(kt), np.sin(kt)
        u[:, 1::2], u[:, 2::2] = c, s
        du[:, 1::2], du[:, 2::2] = -k * s, k * c
    return xi, rho, drho, u, du


def angle_covectors(q, strict=True):
    """Cartesian components of ``dth`` and ``dr`` at rectified states."""
    q, th, r = _cyl(q, strict)
    n = q.shape[1]
    dth = np.zeros((q.shape[0], n))
    dr = np.zeros_like(dth)
    dth[:, 0] = q[:, 1] / r**2
    dth[:, 1] = -q[:, 0] / r**2
    dr[:, 0] = q[:, 0] / r
    dr[:, 1] = q[:, 1] / r
    return th, r, dth, dr


def dtheta_pairing(q, qdot):
    """``<dth(q), qdot> = (q1 qdot0 - q0 qdot1) / r**2``."""
    q = np.asarray(q, float)
    qdot = np.asarray(qdot, float)
    single = q.ndim == 1
    q2, qd2 = np.atleast_2d(q), np.atleast_2d(qdot)
    r2 = q2[:, 0] ** 2 + q2[:, 1] ** 2
    if np.any(r2 == 0):
        raise OriginSingularity("rectified state lies on the axis")
    out = (q2[:, 1] * qd2[:, 0] - q2[:, 0] * qd2[:, 1]) / r2
    return float(out[0]) if single else out


def basis_values(spec: BasisSpec, q, strict=True):
    """All ``v_mu(q)``, shape (N, size)."""
    q, th, r = _cyl(q, strict)
    xi, rho, _, u, _ = _factors(spec, th, r, q[:, 2:])
    V = np.einsum("ni,nj,nk->nijk", xi, rho, u)
    return V.reshape(len(q), -1)[:, 1:]


def basis_pairings(spec: BasisSpec, q, w, strict=True):
    """All ``<dv_mu(q), w>``, shape (N, size)."""
    q, th, r = _cyl(q, strict)
    w = np.atleast_2d(np.asarray(w, float))
    z = q[:, 2:]
    xi, rho, drho, u, du = _factors(spec, th, r, z)
    dth_w = (q[:, 1] * w[:, 0] - q[:, 0] * w[:, 1]) / r**2
    dr_w = (q[:, 0] * w[:, 0] + q[:, 1] * w[:, 1]) / r
    dxi_w = np.zeros_like(xi)
    dxi_w[:, 1:] = w[:, 2:2 + spec.z_dim]
    P = (np.einsum("ni,nj,nk->nijk", dxi_w, rho, u)
         + np.einsum("ni,nj,nk->nijk", xi, drho * dr_w[:, None], u)
         + np.einsum("ni,nj,nk->nijk", xi, rho, du * dth_w[:, None]))
    return P.reshape(len(q), -1)[:, 1:]


def basis_scalar(spec: BasisSpec, mu: int, q) -> float:
    if not 0 <= mu < spec.size:
        raise IndexError(f"basis index {mu} out of range [0, {spec.size})")
    return float(basis_values(spec, q)[0, mu])


def basis_differential(spec: BasisSpec, mu: int, q) -> np.ndarray:
    if not 0 <= mu < spec.size:
        raise IndexError(f"basis index {mu} out of range [0, {spec.size})")
    q = np.asarray(q, float)
    n = q.shape[-1]
    eye = np.eye(n)
    reps = np.repeat(np.atleast_2d(q), n, axis=0)
    return basis_pairings(spec, reps, eye)[:, mu]


@dataclass(frozen=True)
class FormPhaseModel:
    rect: RectificationMap
    basis: BasisSpec
    m: np.ndarray
    C: float
    omega: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.rect.dim

    def _coef(self):
        c = np.zeros(self.basis.size + 1)
        c[1:] = self.m
        return c.reshape(self.basis.shape)

    # -- rectified-coordinate evaluation -----------------------------------

    def rectified_phase(self, q, strict=True):
        q, th, r = _cyl(q, strict)
        xi, rho, _, u, _ = _factors(self.basis, th, r, q[:, 2:])
        s = np.einsum("ijk,ni,nj,nk->n", self._coef(), xi, rho, u)
        return th + s

    def rectified_form(self, q, strict=True):
        """Covector ``dth + sum m dv`` in rectified Cartesian components."""
        q2 = np.atleast_2d(np.asarray(q, float))
        th, r, dth, dr = angle_covectors(q2, strict)
        xi, rho, drho, u, du = _factors(self.basis, th, r, q2[:, 2:])
        M = self._coef()
        a_th = np.einsum("ijk,ni,nj,nk->n", M, xi, rho, du)
        a_r = np.einsum("ijk,ni,nj,nk->n", M, xi, drho, u)
        a_z = np.einsum("ijk,nj,nk->ni", M[1:], rho, u)
        cov = (1.0 + a_th)[:, None] * dth + a_r[:, None] * dr
        cov[:, 2:2 + self.basis.z_dim] += a_z
        return cov

    # -- original-coordinate evaluation ------------------------------------

    def unwrapped_phase(self, x, strict=True):
        """Phase without wrapping; continuous away from the arctan2 cut."""
        single = np.ndim(x) == 1
        out = self.rectified_phase(self.rect.rectify(np.atleast_2d(x), strict),
                                   strict)
        return float(out[0]) if single else out

    def phase(self, x, origin: float = 0.0, strict=True):
        """Phase in [0, 2 pi), measured from the isochron at ``origin``."""
        single = np.ndim(x) == 1
        ph = np.mod(self.unwrapped_phase(np.atleast_2d(x), strict) - origin,
                    TWO_PI)
        return float(ph[0]) if single else ph

    def one_form(self, x, strict=True):
        """Covector of the phase estimate in the original coordinates."""
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(np.asarray(x, float))
        q = self.rect.rectify(x2, strict)
        J = self.rect._jacobian(x2, strict)
        cov = np.einsum("ni,nij->nj", self.rectified_form(q, strict), J)
        return cov[0] if single else cov

    def pairing(self, x, xdot):
        """``<one_form(x), xdot>``."""
        cov = self.one_form(np.atleast_2d(x))
        out = np.einsum("ni,ni->n", cov, np.atleast_2d(xdot))
        return float(out[0]) if np.ndim(x) == 1 else out

    def prc(self, n_samples: int):
        """Phase response curve along the fitted limit cycle.

        Returns ``(phase, covectors, points)``; covector component ``k`` is
        the phase advance per unit perturbation of state coordinate ``k``.
        """
        if n_samples < 1:
            raise ConfigError("n_samples must be positive")
        _, pts = self.rect.cycle_points(n_samples)
        return self.phase(pts), self.one_form(pts), pts

    def loop_integral(self, closed_polyline, tol: float = 1e-9,
                      max_level: int = 14) -> float:
        """Line integral of :meth:`one_form` along a closed polyline.

        Per-edge composite midpoint rule, halving the sub-step on each edge
        until the change falls below the edge's share of ``tol``.
        """
        P = np.atleast_2d(np.asarray(closed_polyline, float))
        if len(P) < 3 or np.max(np.abs(P[0] - P[-1])) > 1e-12:
            raise NotClosed("first and last vertices must coincide")
        a, b = P[:-1], P[1:]
        seg_len = np.linalg.norm(b - a, axis=1)
        keep = seg_len > 0
        a, b, seg_len = a[keep], b[keep], seg_len[keep]
        edge_tol = tol * seg_len / max(seg_len.sum(), np.finfo(float).tiny)

        def edge_sum(idx, n_sub):
            s = (np.arange(n_sub) + 0.5) / n_sub
            pts = a[idx, None, :] + s[None, :, None] * (b - a)[idx, None, :]
            cov = self.one_form(pts.reshape(-1, P.shape[1]))
            cov = cov.reshape(len(idx), n_sub, -1)
            return np.einsum("enk,ek->e", cov, b[idx] - a[idx]) / n_sub

        active = np.arange(len(a))
        current = edge_sum(active, 1)
        total = np.zeros(len(a))
        n_sub = 1
        for _ in range(max_level):
            n_sub *= 2
            refined = edge_sum(active, n_sub)
            done = np.abs(refined - current) < edge_tol[active]
            total[active[done]] = refined[done]
            active, current = active[~done], refined[~done]
            if active.size == 0:
                break
        total[active] = current
        return float(total.sum())

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "formphase-model/1",
            "rectification": self.rect.to_dict(),
            "basis": {"fourier_order": self.basis.fourier_order,
                      "poly_order": self.basis.poly_order,
                      "z_dim": self.basis.z_dim},
            "m": self.m.tolist(),
            "C": self.C,
            "omega": self.omega,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> FormPhaseModel:
        return cls(RectificationMap.from_dict(d["rectification"]),
                   BasisSpec(**d["basis"]), np.asarray(d["m"], float),
                   float(d["C"]), float(d["omega"]),
                   dict(d.get("diagnostics", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> FormPhaseModel:
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> FormPhaseModel:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"no such model file: {p}")
        return cls.from_json(p.read_text(encoding="utf-8"))


def fit(dataset: TimeSeriesDataset, rect: RectificationMap,
        spec: BasisSpec | None = None, ridge: float = 1e-8,
        weights=None) -> FormPhaseModel:
    """Least-squares fit of the form coefficients and the rate constant.

    Minimises ``sum_i (sum_mu m_mu <dv_mu, qdot_i> - (C - <dth, qdot_i>))**2
    + lam |m|**2`` with ``lam = ridge * trace(P^T P) / size``.
    """
    if spec is None:
        spec = BasisSpec(z_dim=rect.dim - 2)
    if spec.z_dim != rect.dim - 2:
        raise ConfigError("basis z_dim must equal state dimension - 2")
    if ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    x = dataset.x
    xdot = dataset.dx
    n_rows, M = x.shape[0], spec.size
    if n_rows < M + 1:
        raise Underdetermined(f"{n_rows} samples for {M + 1} unknowns")
    q = rect.rectify(x)
    J = rect._jacobian(x)
    qdot = np.einsum("nij,nj->ni", J, xdot)
    P = basis_pairings(spec, q, qdot)
    dth = dtheta_pairing(q, qdot)
    A = np.hstack([P, -np.ones((n_rows, 1))])
    b = -dth
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, float))
        A, b = A * sw[:, None], b * sw
    if ridge == 0:
        sv = np.linalg.svd(A, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if cond > COND_LIMIT:
            raise IllConditioned(f"design condition number {cond:.3g}")
        A_aug, b_aug = A, b
    else:
        lam = ridge * float(np.einsum("ij,ij->", P, P)) / M
        R = np.zeros((M, M + 1))
        R[:, :M] = np.sqrt(lam) * np.eye(M)
        A_aug = np.vstack([A, R])
        b_aug = np.concatenate([b, np.zeros(M)])
    sol, *_ = scipy.linalg.lstsq(A_aug, b_aug, lapack_driver="gelsy",
                                 check_finite=False)
    m, C = sol[:M], float(sol[M])
    omega = TWO_PI / rect.cycle.period
    resid = A @ sol - b
    rq = np.hypot(q[:, 0], q[:, 1])
    consistency = abs(C / omega - 1.0)
    if consistency > CONSISTENCY_WARN:
        log.warning("fitted rate C=%.4g disagrees with cycle period "
                    "(|C T / 2pi - 1| = %.3g)", C, consistency)
    diag = {"rms_residual": float(np.sqrt(np.mean(resid**2))),
            "n_samples": int(n_rows),
            "rate_consistency": float(consistency),
            "ridge": float(ridge),
            "radius_range": [float(rq.min()), float(rq.max())]}
    return FormPhaseModel(rect, spec, m, C, omega, diag)


def fit_form_phase(dataset: TimeSeriesDataset, fourier_order: int = 6,
                   poly_order: int = 6, cycle_order: int = 10,
                   ridge: float = 1e-8, zscore: bool = True) -> FormPhaseModel:
    """Rectify then fit: the whole estimator from (x, xdot, t) data."""
    rect = fit_limit_cycle(dataset, cycle_order, zscore=zscore)
    spec = BasisSpec(fourier_order, poly_order, dataset.dim - 2)
    return fit(dataset, rect, spec, ridge)
