"""Weighted exponential-decay fits for retrieval-efficiency curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    R0: float
    tau: float
    covariance: np.ndarray  # over (R0, tau)
    residual_norm: float
    nfev: int = 0

    @property
    def tau_err(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))

    @property
    def R0_err(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))


def fit_exponential(points, max_nfev: int = 200) -> FitResult:
    """Fit ``R0 * exp(-t / tau)`` to ``(t, value, sigma)`` triples.

    Starts from a weighted log-linear regression, then refines with
    Levenberg-Marquardt on the sigma-weighted residuals.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise FitError("points must be (t, value, sigma) triples")
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    t, y, s = pts.T
    if np.any(t < 0) or np.any(y <= 0) or np.any(s <= 0):
        raise FitError("times must be non-negative, values and sigmas positive")
    if np.ptp(t) == 0:
        raise FitError("degenerate input: all points at the same time")

    # log-linear start: log y = log R0 - t/tau, weights (y/sigma)^2
    w = (y / s) ** 2
    a = np.vstack([np.ones_like(t), -t]).T
    coef = np.linalg.lstsq(a * np.sqrt(w)[:, None], np.log(y) * np.sqrt(w), rcond=None)[0]
    rate0 = coef[1]
    if not rate0 > 0 or not np.isfinite(rate0):
        raise FitError("degenerate input: no decay in the data")
    x0 = np.array([np.exp(coef[0]), 1.0 / rate0])

    def resid(p):
        return (p[0] * np.exp(-t / p[1]) - y) / s

    def jac(p):
        e = np.exp(-t / p[1])
        return np.vstack([e / s, p[0] * e * t / p[1] ** 2 / s]).T

    scale = np.abs(x0)
    sol = least_squares(resid, x0, jac=jac, method="lm", x_scale=scale, max_nfev=max_nfev,
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success or not sol.x[1] > 0:
        raise FitError(f"fit did not converge: {sol.message}")
    j = sol.jac
    try:
        cov = np.linalg.inv(j.T @ j)
    except np.linalg.LinAlgError as e:
        raise FitError("singular covariance") from e
    return FitResult(float(sol.x[0]), float(sol.x[1]), cov, float(np.linalg.norm(sol.fun)), sol.nfev)
