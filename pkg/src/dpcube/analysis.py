"""Error theory for the released histograms: tail bounds, usefulness, and expected errors.

Sums of i.i.d. Lap(1/alpha) noise have the bilateral gamma density evaluated
by ``bilateral_gamma_pdf``. Expected errors of the uniform estimator in the
general case are integrals against that density; the least-squares error is
simulated from its noise decomposition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .privacy import NoiseSource, check_alpha


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved tolerance {achieved:.3g})")
        self.achieved = achieved


class MonteCarloEstimate(NamedTuple):
    mean: float
    se: float


@dataclass(frozen=True)
class SmoothnessParams:
    n_p: int = 11
    s: int = 5
    alpha1: float = 0.05
    alpha2: float = 0.15
    gamma: float = 5.0
    eta: float = 5.0

    def __post_init__(self):
        if self.n_p < 1:
            raise ValueError("n_p must be >= 1")
        if not 1 <= self.s <= self.n_p:
            raise ValueError(f"need 1 <= s <= n_p, got s={self.s}, n_p={self.n_p}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        check_alpha(self.alpha1)
        check_alpha(self.alpha2)


def laplace_sum_tail_bound(m: int, b: float, epsilon: float) -> float:
    """Lower bound 1 - m*exp(-eps/(m*b)) on Pr[sum of m |Lap(b)| <= eps]; may be negative."""
    return 1.0 - m * math.exp(-epsilon / (m * b))


def cell_usefulness_alpha(m: int, epsilon: float, delta: float) -> float:
    """Smallest alpha for which the cell histogram is (epsilon, delta)-useful."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return m * math.log(m / delta) / epsilon


def _inner_peak(n: int, a: float) -> float:
    # argmax over v of (n-1) log v + (n-1) log(a + v) - v, with a = 2*alpha*|z|
    k = n - 1
    c = a - 2 * k
    return 0.5 * (-c + math.sqrt(c * c + 4 * k * a))


def log_bilateral_gamma_pdf(n: int, alpha: float, z: float) -> float:
    """Log density of the sum of ``n`` i.i.d. Lap(1/alpha) variables at ``z``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha = check_alpha(alpha)
    az = abs(float(z))
    if n == 1:
        return math.log(alpha / 2) - alpha * az
    k = n - 1
    # (|z| + v/(2 alpha))^k = (2 alpha)^-k (a + v)^k with a = 2 alpha |z|
    a = 2.0 * alpha * az
    v0 = _inner_peak(n, a)
    log_peak = k * math.log(v0) + k * math.log(a + v0) - v0

    def g(v):
        if v <= 0.0:
            return 0.0
        return math.exp(k * math.log(v) + k * math.log(a + v) - v - log_peak)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            left, e1 = integrate.quad(g, 0.0, v0, epsabs=0.0, epsrel=1e-12, limit=200)
            right, e2 = integrate.quad(g, v0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"inner integral failed for n={n}, z={z}: {exc}", math.nan) from None
    inner = left + right
    return (
        n * math.log(alpha)
        - n * math.log(2.0)
        - 2.0 * math.lgamma(n)
        - alpha * az
        - k * math.log(2.0 * alpha)
        + log_peak
        + math.log(inner)
    )


def bilateral_gamma_pdf(n: int, alpha: float, z: float) -> float:
    return math.exp(log_bilateral_gamma_pdf(n, alpha, z))


def _quad(f, lo, hi, points, epsrel, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        pts = sorted(p for p in set(points) if lo < p < hi)
        val, err = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0, epsrel=epsrel, limit=500)
    if not math.isfinite(val) or err > epsrel * max(abs(val), 1e-300):
        raise QuadratureError(f"{what} did not converge", err / max(abs(val), 1e-300))
    return val


def _cutoff(s: int, alpha: float, eta: float = 0.0) -> float:
    return abs(eta) + 50.0 * s / alpha


def bilateral_gamma_cdf(n: int, alpha: float, z: float, epsrel: float = 1e-10) -> float:
    """Distribution function of the n-fold Laplace sum by quadrature of its density."""
    z = float(z)
    if z == 0:
        return 0.5
    tail = _quad(
        lambda t: bilateral_gamma_pdf(n, alpha, t), abs(z), _cutoff(n, alpha, z), [], epsrel, "cdf tail"
    )
    return 1.0 - tail if z > 0 else tail


def bilateral_gamma_cdf_table(n: int, alpha: float, grid: np.ndarray, epsrel: float = 1e-10) -> np.ndarray:
    """CDF on an increasing grid by accumulating quadrature over consecutive intervals."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    f = lambda t: bilateral_gamma_pdf(n, alpha, t)
    start = bilateral_gamma_cdf(n, alpha, grid[0], epsrel)
    pieces = [
        _quad(f, a, b, [0.0], epsrel, "cdf piece") if b > a else 0.0 for a, b in zip(grid[:-1], grid[1:])
    ]
    return start + np.concatenate([[0.0], np.cumsum(pieces)])


def uniform_usefulness_check(p: SmoothnessParams, epsilon: float, delta: float) -> bool:
    """Sufficient condition for (epsilon, delta)-usefulness of uniform estimation on gamma-smooth data.

    When the query covers the whole box the approximation term vanishes and
    the condition reduces to a non-negative numerator.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    numerator = epsilon + p.s * math.log(delta) / (p.alpha2 * p.n_p)
    span = min(p.s, p.n_p - p.s)
    if span == 0:
        return numerator >= 0
    return p.gamma <= numerator / span


def usefulness_crossover_epsilon(p: SmoothnessParams, delta: float) -> float:
    """Smallest epsilon for which ``uniform_usefulness_check`` holds."""
    return p.gamma * min(p.s, p.n_p - p.s) - p.s * math.log(delta) / (p.alpha2 * p.n_p)


def uniform_error_bound(p: SmoothnessParams) -> float:
    """Upper bound gamma*min(s, n_p - s) + s/(alpha2*n_p) on the expected uniform-estimation error."""
    return p.gamma * min(p.s, p.n_p - p.s) + p.s / (p.alpha2 * p.n_p)


def uniform_error_general(p: SmoothnessParams, epsrel: float = 1e-4) -> float:
    """E|eta + sum of s Lap(1/alpha1)| by quadrature against the bilateral gamma density."""
    s, a1, eta = p.s, p.alpha1, p.eta
    cut = _cutoff(s, a1, eta)
    f = lambda z: bilateral_gamma_pdf(s, a1, z) * abs(eta + z)
    # split at the density kink (0) and the |eta + z| kink (-eta)
    return _quad(f, -cut, cut, [0.0, -eta], epsrel, "expected uniform error")


def ls_error_expected(p: SmoothnessParams, mc: int = 100_000, seed: int = 0) -> MonteCarloEstimate:
    """E|Q x_LS - Q x| for a query of s cells inside a box of n_p cells, by simulation.

    The error is s/(n_p+1) N(alpha2) + (n_p+1-s)/(n_p+1) sum_s N(alpha1)
    - s/(n_p+1) sum_{n_p-s} N(alpha1).
    """
    if mc < 1000:
        raise ValueError("need at least 1000 Monte Carlo samples")
    n, s = p.n_p, p.s
    src = NoiseSource(seed)
    b1, b2 = 1.0 / p.alpha1, 1.0 / p.alpha2
    err = s / (n + 1) * src.laplace(b2, size=mc)
    err += (n + 1 - s) / (n + 1) * src.laplace(b1, size=mc * s).reshape(mc, s).sum(axis=1)
    if n - s:
        err -= s / (n + 1) * src.laplace(b1, size=mc * (n - s)).reshape(mc, n - s).sum(axis=1)
    a = np.abs(err)
    return MonteCarloEstimate(float(a.mean()), float(a.std(ddof=1) / math.sqrt(mc)))


def worst_case_smooth_partition(p: SmoothnessParams) -> np.ndarray:
    """A gamma-smooth box maximizing the uniform approximation error for a query on its first s cells.

    The error is linear in the cells, so the maximum sits at a vertex of
    [0, gamma]^n_p: query cells at gamma, the rest at 0.
    """
    x = np.zeros(p.n_p)
    x[: p.s] = p.gamma
    return x


def uniform_error_smooth_mc(
    p: SmoothnessParams, x: np.ndarray | None = None, mc: int = 100_000, seed: int = 0
) -> MonteCarloEstimate:
    """Simulated E|s/n_p * y_p - Qx| for a box ``x`` with the query on its first s cells."""
    if mc < 1000:
        raise ValueError("need at least 1000 Monte Carlo samples")
    x = worst_case_smooth_partition(p) if x is None else np.asarray(x, dtype=float)
    if x.size != p.n_p:
        raise ValueError("box must have n_p cells")
    src = NoiseSource(seed)
    approx = p.s / p.n_p * x.sum() - x[: p.s].sum()
    a = np.abs(approx + p.s / p.n_p * src.laplace(1.0 / p.alpha2, size=mc))
    return MonteCarloEstimate(float(a.mean()), float(a.std(ddof=1) / math.sqrt(mc)))
