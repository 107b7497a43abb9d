"""Real Fourier series in an angle and their least-squares fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, Underdetermined

COND_LIMIT = 1e12


@dataclass(frozen=True)
class FourierSeries:
    """``c + sum_k a_k cos(k th) + b_k sin(k th)``, one column per output.

    ``constant`` has shape (d,), ``cos_coeffs`` and ``sin_coeffs`` have
    shape (K, d). ``d == 0`` is allowed and represents an empty output.
    """

    constant: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    residual: float = 0.0

    @property
    def order(self) -> int:
        return self.cos_coeffs.shape[0]

    @property
    def output_dim(self) -> int:
        return self.constant.shape[0]

    @classmethod
    def zeros(cls, order: int, output_dim: int = 1) -> FourierSeries:
        return cls(np.zeros(output_dim), np.zeros((order, output_dim)),
                   np.zeros((order, output_dim)))

    @classmethod
    def constant_series(cls, value, order: int = 0) -> FourierSeries:
        value = np.atleast_1d(np.asarray(value, float))
        z = np.zeros((order, value.shape[0]))
        return cls(value.copy(), z, z.copy())

    def _harmonics(self, theta):
        k = np.arange(1, self.order + 1)
        kt = np.multiply.outer(np.asarray(theta, float), k)
        return np.cos(kt), np.sin(kt)

    def __call__(self, theta) -> np.ndarray:
        """Evaluate; shape ``theta.shape + (d,)``."""
        c, s = self._harmonics(theta)
        return self.constant + c @ self.cos_coeffs + s @ self.sin_coeffs

    def scalar(self, theta) -> np.ndarray:
        """Evaluate a single-output series, dropping the output axis."""
        return self(theta)[..., 0]

    def derivative(self) -> FourierSeries:
        k = np.arange(1, self.order + 1)[:, None]
        return FourierSeries(np.zeros_like(self.constant),
                             k * self.sin_coeffs, -k * self.cos_coeffs)

    def abs_bound(self) -> np.ndarray:
        """Upper bound on ``|self(th)|`` per output without the constant."""
        return np.abs(self.cos_coeffs).sum(0) + np.abs(self.sin_coeffs).sum(0)

    def to_dict(self) -> dict:
        return {"constant": self.constant.tolist(),
                "cos": self.cos_coeffs.tolist(),
                "sin": self.sin_coeffs.tolist(),
                "order": self.order,
                "residual": self.residual}

    @classmethod
    def from_dict(cls, d) -> FourierSeries:
        const = np.asarray(d["constant"], float)
        dim = const.shape[0]
        order = int(d.get("order", len(d["cos"])))
        cos = np.asarray(d["cos"], float).reshape(order, dim)
        sin = np.asarray(d["sin"], float).reshape(order, dim)
        return cls(const, cos, sin, float(d.get("residual", 0.0)))


def fourier_design(theta, order: int, constant: bool = True) -> np.ndarray:
    """Regressor matrix ``[1, cos th, ..., cos K th, sin th, ..., sin K th]``."""
    theta = np.asarray(theta, float).ravel()
    k = np.arange(1, order + 1)
    kt = np.outer(theta, k)
    cols = [np.cos(kt), np.sin(kt)]
    if constant:
        cols.insert(0, np.ones((theta.size, 1)))
    return np.hstack(cols)


def fit_fourier(angles, values, order: int, weights=None) -> FourierSeries:
    """Weighted linear least squares fit of a Fourier series of ``order``.

    ``values`` may be (N,) or (N, d).
    """
    angles = np.asarray(angles, float).ravel()
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    n, d = values.shape
    if n != angles.size:
        raise ValueError("angles and values differ in length")
    if n < 2 * order + 1:
        raise Underdetermined(
            f"{n} samples cannot determine {2 * order + 1} Fourier coefficients")
    if np.ptp(angles) == 0 and order > 0:
        raise Underdetermined("all angles are equal")
    X = fourier_design(angles, order)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, float).ravel())[:, None]
        Xw, Yw = X * sw, values * sw
    else:
        Xw, Yw = X, values
    sv = np.linalg.svd(Xw, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise IllConditioned("Fourier regressors are ill-conditioned")
    coef, *_ = np.linalg.lstsq(Xw, Yw, rcond=None)
    resid = float(np.sqrt(np.mean((Yw - Xw @ coef) ** 2))) if d else 0.0
    return FourierSeries(coef[0].copy(), coef[1:order + 1].copy(),
                         coef[order + 1:].copy(), resid)
