"""ANOVA decompositions, intraclass correlation, design effects, and
sample-size arithmetic."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AnovaSummary", "anova", "design_effect", "effective_sample_size",
    "required_clusters", "srs_sample_size", "normal_quantile",
]


@dataclass(frozen=True)
class AnovaSummary:
    sst: float
    ssb: float
    ssw: float
    df_between: int
    df_within: int
    s2_between: float
    s2_within: float
    s2_total: float
    icc: float
    delta: float
    size_covariance: float

    @property
    def rho(self):
        return self.icc


def anova(groups):
    """Between/within decomposition of clustered values.

    `groups` is a sequence of per-cluster value arrays.  Returns the sums of
    squares (SST = SSB + SSW), the mean squares, the intraclass correlation
    rho = 1 - M/(M-1) * SSW/SST (equal cluster sizes), the cluster
    homogeneity delta = 1 - (SSW/(N-N_I)) / (SST/(N-1)) which handles
    unequal sizes, and the size-covariance term
    C* = (N_I-1)^{-1} sum (M_i - Mbar) M_i ybar_i^2."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    NI = len(arrays)
    sizes = np.array([a.size for a in arrays], dtype=float)
    N = int(sizes.sum())
    allv = np.concatenate(arrays)
    grand = allv.mean()
    means = np.array([a.mean() for a in arrays])
    ssw = float(sum(np.sum((a - m) ** 2) for a, m in zip(arrays, means)))
    ssb = float(np.sum(sizes * (means - grand) ** 2))
    sst = ssw + ssb
    equal = np.all(sizes == sizes[0])
    M = sizes[0]
    df_b = NI - 1
    df_w = int(N - NI)
    s2b = ssb / df_b if df_b else 0.0
    s2w = ssw / df_w if df_w else 0.0
    s2 = sst / (N - 1) if N > 1 else 0.0
    icc = 1 - (M / (M - 1)) * (ssw / sst) if equal and M > 1 and sst > 0 else math.nan
    delta = 1 - (ssw / df_w) / (sst / (N - 1)) if df_w and sst > 0 else math.nan
    mbar = sizes.mean()
    cstar = float(np.sum((sizes - mbar) * sizes * means ** 2) / (NI - 1)) if NI > 1 else 0.0
    return AnovaSummary(sst, ssb, ssw, df_b, df_w, s2b, s2w, s2, icc, delta, cstar)


def design_effect(M, rho=None, delta=None, N=None, N_I=None, s2=None,
                  mean_size=None, size_covariance=0.0):
    """Variance inflation of cluster sampling against SRS of the same size.

    Equal clusters (or subsample size m): 1 + (M - 1) rho.  With unequal
    sizes pass delta, the population counts and s2 to get
    (1 + (N - N_I)/(N_I - 1) * delta) + C*/(Mbar S^2)."""
    if delta is None:
        if rho is None:
            raise ValueError("need rho or delta")
        return 1 + (M - 1) * rho
    base = 1 + (N - N_I) / (N_I - 1) * delta
    return base + size_covariance / (mean_size * s2)


def effective_sample_size(n, deff):
    if deff <= 0:
        raise ValueError("design effect must be positive")
    return n / deff


def normal_quantile(p):
    """Inverse standard-normal CDF via a rational approximation polished by
    one Halley step on erfc; absolute error far below 1e-8."""
    if not 0 < p < 1:
        raise ValueError("probability must be in (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    elif p <= phigh:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    # one Halley refinement
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    x = x - u / (1 + x * u / 2)
    return x


def srs_sample_size(S2, d, alpha=0.05, N=None):
    """Smallest n with margin of error d at level alpha under SRS:
    n >= S^2 / ((d/z)^2 + S^2/N)."""
    if d <= 0:
        raise ValueError("margin of error must be positive")
    z = normal_quantile(1 - alpha / 2)
    denom = (d / z) ** 2 + (S2 / N if N is not None else 0.0)
    return max(1, math.ceil(S2 / denom - 1e-12))


def required_clusters(d, alpha, M, rho, S2=0.25):
    """Planning count of equal-size clusters for a proportion with margin of
    error d: effective size from the conservative planning rule (z = 2 at
    the 5% level, so n* = d^-2 for S2 = 1/4), inflated by the design effect
    1 + (M-1) rho rounded to two significant figures, as planning
    conventions go."""
    z = 2.0 if abs(alpha - 0.05) < 1e-12 else normal_quantile(1 - alpha / 2)
    n_eff = S2 * (z / d) ** 2
    deff = design_effect(M, rho)
    if deff > 0:
        digits = 1 - int(math.floor(math.log10(abs(deff))))
        deff = round(deff, digits)
    return n_eff * deff / M
