"""Numerical core: normal special functions, the two-sample z-test, the
one-sample Kolmogorov-Smirnov uniformity test and a few diagnostics.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Below this many p-values the asymptotic Kolmogorov law is only approximate.
KS_ASYMPTOTIC_MIN_N = 100

_KOLMOGOROV_TOL = 1e-12
_KOLMOGOROV_MAX_TERMS = 100
# Under this lambda the alternating series needs more than the term budget;
# the Jacobi-transformed series converges in a handful of terms there.
_KOLMOGOROV_SMALL_LAMBDA = 0.6


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float
    skewness: float
    n_nonzero: int


@dataclass(frozen=True)
class AteEstimate:
    ate: float
    se: float
    ci_low: float
    ci_high: float
    z: float
    p: float
    alpha: float

    @property
    def significant(self) -> bool:
        return self.p < self.alpha

    @property
    def ci_excludes_zero(self) -> bool:
        return self.ci_low > 0.0 or self.ci_high < 0.0


@dataclass(frozen=True)
class KsResult:
    d: float
    p: float
    n: int
    small_sample: bool = False


def _check_probability_open(q: float, name: str = "q") -> None:
    if not (0.0 < q < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {q!r}")


def normal_cdf(x: float) -> float:
    """Standard normal CDF, accurate to ~1e-16 absolute."""
    if not math.isfinite(x):
        raise DomainError(f"normal_cdf needs a finite argument, got {x!r}")
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    """Upper tail 1 - Phi(x), without cancellation for large x."""
    if not math.isfinite(x):
        raise DomainError(f"normal_sf needs a finite argument, got {x!r}")
    return 0.5 * math.erfc(x / _SQRT2)


# Acklam's rational approximation (relative error ~1.2e-9), refined below.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam_lower(q: float) -> float:
    # valid for 0 < q <= 0.5
    if q < _P_LOW:
        t = math.sqrt(-2.0 * math.log(q))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        return num / den
    u = q - 0.5
    r = u * u
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * u
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def inverse_normal_cdf(q: float) -> float:
    """Quantile function of the standard normal.

    Acklam's approximation followed by one Halley step against
    :func:`normal_cdf`, which brings the result to near machine precision.
    The upper half is obtained by antisymmetry (``1 - q`` is exact there).
    """
    _check_probability_open(q)
    if q > 0.5:
        return -inverse_normal_cdf(1.0 - q)
    if q == 0.5:
        return 0.0
    x = _acklam_lower(q)
    if 0.5 * x * x > 700.0:
        # deep subnormal tail: exp overflows, keep the approximation
        return x
    e = 0.5 * math.erfc(-x / _SQRT2) - q
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def summarize(values: Sequence[float]) -> SampleSummary:
    """Mean, population variance (1/n divisor), skewness g1 and nonzero count."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    n = arr.size
    if n == 0:
        raise DomainError("summarize needs at least one value")
    if not np.all(np.isfinite(arr)):
        raise DomainError("summarize needs finite values")
    if arr.min() == arr.max():
        # exact answer; a rounded mean would leave spurious variance
        c = float(arr[0])
        return SampleSummary(n=n, mean=c, variance=0.0, skewness=0.0, n_nonzero=n if c != 0.0 else 0)
    mean = math.fsum(arr) / n
    dev = arr - mean
    m2 = math.fsum(dev * dev) / n
    m3 = math.fsum(dev * dev * dev) / n
    skew = m3 / m2 ** 1.5 if m2 > 0.0 else 0.0
    return SampleSummary(
        n=n,
        mean=mean,
        variance=m2,
        skewness=skew,
        n_nonzero=int(np.count_nonzero(arr)),
    )


def ate_from_moments(
    n_control: int,
    mean_control: float,
    var_control: float,
    n_treatment: int,
    mean_treatment: float,
    var_treatment: float,
    alpha: float,
) -> AteEstimate:
    """Difference-in-means z-test from per-group moments.

    ``var_*`` are population variances (1/n divisor). Zero standard error is
    resolved as p = 1 when the effect is exactly zero and p = 0 otherwise.
    """
    if n_control < 2 or n_treatment < 2:
        raise InsufficientDataError(
            f"each group needs n >= 2 (got {n_control} and {n_treatment})"
        )
    _check_probability_open(alpha, "alpha")
    ate = mean_treatment - mean_control
    se = math.sqrt(max(var_control, 0.0) / n_control + max(var_treatment, 0.0) / n_treatment)
    half = inverse_normal_cdf(1.0 - alpha / 2.0) * se
    if se > 0.0:
        z = ate / se
        # 2 * (1 - Phi(|z|)) written as erfc to keep precision in the tail
        p = math.erfc(abs(z) / _SQRT2)
    elif ate == 0.0:
        z, p = 0.0, 1.0
    else:
        z, p = math.copysign(math.inf, ate), 0.0
    return AteEstimate(ate=ate, se=se, ci_low=ate - half, ci_high=ate + half,
                       z=z, p=min(p, 1.0), alpha=alpha)


def ate_estimate(control: SampleSummary, treatment: SampleSummary, alpha: float = 0.05) -> AteEstimate:
    """Treatment-minus-control effect with a normal CI and two-sided p-value."""
    return ate_from_moments(
        control.n, control.mean, control.variance,
        treatment.n, treatment.mean, treatment.variance,
        alpha,
    )


def kolmogorov_sf(lam: float) -> float:
    """Survival function Q(lambda) = P(K > lambda) of the Kolmogorov law.

    Uses ``2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)``, stopping once a
    term drops below 1e-12 (at most 100 terms). For small lambda the same
    quantity is evaluated through the theta-function identity
    ``1 - sqrt(2 pi)/lambda * sum_k exp(-(2k-1)^2 pi^2 / (8 lambda^2))``,
    which is where the alternating form would need thousands of terms.
    """
    if not math.isfinite(lam) and lam != math.inf:
        raise DomainError(f"lambda must be a number, got {lam!r}")
    if lam < 0.0:
        raise DomainError(f"lambda must be nonnegative, got {lam!r}")
    if lam == 0.0:
        return 1.0
    if lam < _KOLMOGOROV_SMALL_LAMBDA:
        c = math.pi * math.pi / (8.0 * lam * lam)
        total = 0.0
        for k in range(1, _KOLMOGOROV_MAX_TERMS + 1):
            term = math.exp(-(2 * k - 1) ** 2 * c)
            total += term
            # the prefactor sqrt(2 pi)/lambda amplifies truncation error
            if term < 1e-17:
                break
        return min(1.0, max(0.0, 1.0 - _SQRT2PI / lam * total))
    total = 0.0
    sign = 1.0
    for k in range(1, _KOLMOGOROV_MAX_TERMS + 1):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < _KOLMOGOROV_TOL:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(pvalues: Sequence[float]) -> float:
    """Two-sided one-sample KS distance between the eCDF and U(0, 1)."""
    u = np.sort(np.asarray(pvalues, dtype=np.float64).ravel())
    n = u.size
    if n == 0:
        raise DomainError("KS test needs at least one value")
    if np.isnan(u).any() or u[0] < 0.0 or u[-1] > 1.0:
        raise DomainError("KS uniformity test needs values in [0, 1]")
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = np.max(i / n - u)
    d_minus = np.max(u - (i - 1.0) / n)
    return float(max(d_plus, d_minus))


def ks_uniform_test(pvalues: Sequence[float]) -> KsResult:
    """Kolmogorov-Smirnov test of ``pvalues`` against the uniform law.

    The p-value is ``kolmogorov_sf(sqrt(n) * d)`` for every n; results with
    fewer than 100 samples carry ``small_sample=True``.
    """
    d = ks_statistic(pvalues)
    n = int(np.size(pvalues))
    return KsResult(
        d=d,
        p=kolmogorov_sf(math.sqrt(n) * d),
        n=n,
        small_sample=n < KS_ASYMPTOTIC_MIN_N,
    )


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they occupy."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(arr, kind="mergesort")
    sorted_vals = arr[order]
    n = arr.size
    # start index of every run of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], n]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Returns NaN when either input is constant (the rank correlation is
    undefined there).
    """
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.size != ya.size:
        raise DomainError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 2:
        raise DomainError("spearman_rho needs at least two pairs")
    if np.isnan(xa).any() or np.isnan(ya).any():
        raise DomainError("spearman_rho does not accept NaN")
    rx = average_ranks(xa)
    ry = average_ranks(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return math.nan
    return max(-1.0, min(1.0, float(np.dot(rx, ry)) / denom))


def bonferroni_adjust(pvalues: Sequence[float]) -> list[float]:
    """Multiply each p-value by the number of tests, capped at 1."""
    ps = [float(p) for p in pvalues]
    for p in ps:
        if not (0.0 <= p <= 1.0):
            raise DomainError(f"p-values must lie in [0, 1], got {p!r}")
    m = len(ps)
    return [min(1.0, p * m) for p in ps]
