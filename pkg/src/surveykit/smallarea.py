"""Area-level small-area estimation: model fitting, EBLUP, analytic and
bootstrap MSE, and optimal composite weighting."""

import math
from dataclasses import dataclass

import numpy as np

from .estimators import Estimate

__all__ = [
    "FayHerriotModel", "fit_fay_herriot", "eblup", "prasad_rao_mse",
    "bootstrap_mse", "composite_smallarea",
]


@dataclass(frozen=True)
class FayHerriotModel:
    """Fitted area-level model: direct estimates with known sampling
    variances V_g, covariates X_g, coefficient beta, moment estimate of the
    structural variance, and the shrinkage factors
    alpha_g = sigma_u^2 / (V_g + sigma_u^2)."""

    direct: np.ndarray
    V_g: np.ndarray
    X: np.ndarray
    beta: np.ndarray
    sigma2_u: float
    var_beta: np.ndarray
    var_sigma2_u: float
    boundary: bool = False

    @property
    def alpha(self):
        return self.sigma2_u / (self.V_g + self.sigma2_u)

    @property
    def synthetic(self):
        return self.X @ self.beta


def _gls_beta(direct, X, V_g, sigma2):
    w = 1 / (sigma2 + V_g)
    gram = (X * w[:, None]).T @ X
    beta = np.linalg.solve(gram, (X * w[:, None]).T @ direct)
    return beta, np.linalg.inv(gram)


def fit_fay_herriot(direct, V_g, X=None, tol=1e-10, max_iter=500):
    """Alternate GLS for beta with the moment equation for sigma_u^2:
    solve sum Z_g/(sigma_u^2 + V_g) = G - p for the residual squares
    Z_g = (direct_g - X_g'beta)^2, flooring at zero when the equation has
    no positive root."""
    direct = np.asarray(direct, dtype=float)
    V_g = np.asarray(V_g, dtype=float)
    if np.any(V_g <= 0):
        raise ValueError("sampling variances must be positive")
    G = direct.size
    X = np.ones((G, 1)) if X is None else np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != G:
        X = X.T
    p = X.shape[1]
    if G <= p + 1:
        raise ValueError("need more areas than regression parameters")
    sigma2 = max(float(np.var(direct, ddof=1)) - float(np.mean(V_g)), 0.0)
    boundary = False
    for _ in range(max_iter):
        beta, _ = _gls_beta(direct, X, V_g, sigma2)
        Z = (direct - X @ beta) ** 2

        def moment(s2):
            return float(np.sum(Z / (s2 + V_g))) - (G - p)

        if moment(0.0) <= 0:
            new = 0.0
            boundary = True
        else:
            boundary = False
            lo, hi = 0.0, max(float(Z.max()), 1.0)
            while moment(hi) > 0:
                hi *= 2
                if hi > 1e12:
                    raise RuntimeError("moment equation failed to bracket")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if moment(mid) > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < tol:
                    break
            new = 0.5 * (lo + hi)
        if abs(new - sigma2) < tol:
            sigma2 = new
            break
        sigma2 = new
    else:
        raise RuntimeError(f"Fay-Herriot fit did not converge in {max_iter} iterations")
    beta, var_beta = _gls_beta(direct, X, V_g, sigma2)
    var_sigma2 = 2 * G / float(np.sum(1 / (sigma2 + V_g))) ** 2
    return FayHerriotModel(direct, V_g, X, beta, float(sigma2), var_beta,
                           float(var_sigma2), boundary)


def eblup(model, g):
    """alpha_g * direct + (1 - alpha_g) * synthetic; a convex combination,
    so it always lies between the two."""
    a = model.alpha[g]
    value = a * model.direct[g] + (1 - a) * model.synthetic[g]
    return Estimate(float(value), method="eblup")


def prasad_rao_mse(model, g):
    """Approximately unbiased MSE of the EBLUP:
    alpha V_g  +  (1-alpha)^2 X' V(beta) X  +  2 V(alpha) (V_g + sigma_u^2),
    with V(alpha) from the delta rule
    {V_g/(sigma_u^2+V_g)^2}^2 V(sigma_u^2)."""
    a = float(model.alpha[g])
    Vg = float(model.V_g[g])
    xg = model.X[g]
    m1 = a * Vg
    m2 = (1 - a) ** 2 * float(xg @ model.var_beta @ xg)
    var_alpha = (Vg / (model.sigma2_u + Vg) ** 2) ** 2 * model.var_sigma2_u
    m3 = 2 * var_alpha * (Vg + model.sigma2_u)
    return m1 + m2 + m3


def bootstrap_mse(model, B, rng=None, g=None):
    """Parametric bootstrap MSE: regenerate the area means from the fitted
    structural model, the direct estimates from the sampling model, refit,
    recompute the EBLUP, and average the squared prediction errors."""
    if B < 1:
        raise ValueError("need at least one bootstrap replicate")
    rng = np.random.default_rng(rng)
    G = model.direct.size
    synth = model.synthetic
    sd_u = math.sqrt(model.sigma2_u)
    sd_e = np.sqrt(model.V_g)
    targets = np.arange(G) if g is None else np.atleast_1d(g)
    acc = np.zeros(len(targets))
    for _ in range(B):
        truth = synth + rng.normal(0.0, sd_u, size=G)
        direct_b = truth + rng.normal(0.0, 1.0, size=G) * sd_e
        fit_b = fit_fay_herriot(direct_b, model.V_g, model.X)
        a = fit_b.alpha
        pred = a * direct_b + (1 - a) * fit_b.synthetic
        acc += (pred[targets] - truth[targets]) ** 2
    out = acc / B
    return float(out[0]) if np.isscalar(g) or (g is not None and len(targets) == 1) else out


def composite_smallarea(direct, synthetic, mse_direct, mse_synthetic):
    """Optimal convex combination alpha* = MSE_s / (MSE_d + MSE_s) of a
    direct and a synthetic estimate."""
    denom = mse_direct + mse_synthetic
    if denom <= 0:
        raise ValueError("both mean squared errors are zero")
    alpha = mse_synthetic / denom
    value = alpha * direct + (1 - alpha) * synthetic
    variance = mse_direct * mse_synthetic / denom
    return Estimate(float(value), float(variance), method="composite_smallarea"), alpha
