"""Shared numeric utilities: Gaussian tails, log-domain combinatorics,
monotone root finding and quadrature rules.

Everything here is a pure function of its arguments; all probability
work is done in the log domain so callers can chain results at block
lengths where raw probabilities underflow.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import erfc, erfcinv, erfcx

LOG_ZERO = float("-inf")
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class BracketError(ValueError):
    """Target lies outside the bracket handed to solve_monotone."""


def q_func(x):
    """Upper Gaussian tail Q(x) = P{N(0,1) > x}.

    Implemented through the complementary error function; accurate to
    ~1e-15 relative over the range where the result is representable.
    Accepts scalars or arrays.
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2) if np.ndim(x) else 0.5 * math.erfc(x / _SQRT2)


def log_q(x: float) -> float:
    """ln Q(x), stable in both deep tails.

    For x >= 0 uses the scaled complementary error function, so it stays
    finite far beyond the point where Q itself underflows.
    """
    if x < 0.0:
        # Q(x) = 1 - Q(-x); Q(-x) is tiny only for very negative x.
        return math.log1p(-q_func(-x)) if x > -37.0 else -math.exp(log_q(-x))
    return math.log(0.5 * erfcx(x / _SQRT2)) - 0.5 * x * x


def scaled_gauss_tail(a: float, s: float = 0.0) -> float:
    """exp(a^2/2) * Q(a + s) without overflow, for a >= 0, s >= 0."""
    z = (a + s) / _SQRT2
    return 0.5 * math.exp(-a * s - 0.5 * s * s) * erfcx(z)


def q_inv(eps: float) -> float:
    """Inverse of q_func on (0, 1).

    Seeds from erfcinv and applies one Newton polish step (falling back
    to the seed when the step would leave the feasible range), which
    keeps q_func(q_inv(eps)) = eps to ~1e-12 relative even for eps near
    the underflow edge.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"q_inv requires eps in (0,1), got {eps}")
    x = _SQRT2 * erfcinv(2.0 * eps)
    # Newton on log Q for symmetric accuracy at both ends.
    lf = log_q(x) - math.log(eps)
    dlog = -math.exp(-0.5 * x * x - LOG_SQRT_2PI - log_q(x))
    if dlog != 0.0 and math.isfinite(dlog):
        step = lf / dlog
        if abs(step) < 0.5:
            x = x - step
    return float(x)


def log_binom(n: int, w: int) -> float:
    """ln C(n, w); exact integer arithmetic for small n, log-gamma beyond."""
    if w < 0 or w > n:
        raise ValueError(f"log_binom needs 0 <= w <= n, got n={n}, w={w}")
    if n <= 60:
        return math.log(math.comb(n, w))
    return math.lgamma(n + 1) - math.lgamma(w + 1) - math.lgamma(n - w + 1)


def log_multinom(counts) -> float:
    """ln of the multinomial coefficient (sum counts)! / prod counts!."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("negative count in multinomial coefficient")
    n = sum(counts)
    if n <= 60:
        num = math.factorial(n)
        for c in counts:
            num //= math.factorial(c)
        return math.log(num)
    return math.lgamma(n + 1) - sum(math.lgamma(c + 1) for c in counts)


def solve_monotone(f, target: float, lo: float, hi: float,
                   rtol: float = 1e-10, xtol: float = 1e-14,
                   max_iter: int = 400) -> float:
    """Solve f(x) = target for nondecreasing f on [lo, hi] by bisection.

    Stops when |f(x) - target| <= rtol * max(1, |target|) or the bracket
    width drops below xtol (absolute, or relative for large x).
    Raises BracketError when the target is not enclosed.
    """
    ftol = rtol * max(1.0, abs(target))
    flo, fhi = f(lo), f(hi)
    if flo > target + ftol or fhi < target - ftol:
        raise BracketError(
            f"target {target} outside [f(lo), f(hi)] = [{flo}, {fhi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - target) <= ftol:
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule: integrates f against exp(-x^2) on the line."""
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def gaussian_nodes(self, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Nodes mapped so the rule integrates against N(mean, std^2)."""
        return mean + std * _SQRT2 * self.nodes

    @property
    def gaussian_weights(self) -> np.ndarray:
        """Weights normalized to sum to 1 (probability measure)."""
        return self.weights / math.sqrt(math.pi)


@lru_cache(maxsize=32)
def gauss_hermite(order: int = 199) -> QuadratureRule:
    """Gauss-Hermite rule of the given order (exact to degree 2*order-1)."""
    from scipy.special import roots_hermite
    x, w = roots_hermite(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=order)


@lru_cache(maxsize=128)
def _gl_panel(points: int):
    x, w = np.polynomial.legendre.leggauss(points)
    return x, w


def composite_gauss_legendre(lo: float, hi: float, panel_width: float = 0.5,
                             points: int = 20):
    """Composite Gauss-Legendre nodes/weights on [lo, hi].

    Splits the interval into panels of at most panel_width and applies a
    fixed-order rule on each; machine precision for integrands that are
    smooth on the panel scale (e.g. Gaussians times exponentials).
    """
    if hi <= lo:
        raise ValueError("empty integration interval")
    x0, w0 = _gl_panel(points)
    n_panels = max(1, int(math.ceil((hi - lo) / panel_width)))
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    return nodes, weights


def rationalize_step(diffs, max_denominator: int = 10 ** 6,
                     rel_tol: float = 1e-9, max_multiplier: int = 10 ** 4):
    """Common lattice step for a set of positive reals, or None.

    Uses continued-fraction rationalization of each ratio against the
    smallest difference; succeeds when every input is an integer multiple
    of the returned step to within rel_tol relative. Steps that would
    give any input a multiplier above max_multiplier are rejected: a
    genuine lattice has small multipliers, while irrational ratios can
    always be faked with astronomically fine steps.
    """
    diffs = [float(d) for d in diffs if d > 0.0]
    if not diffs:
        return None
    base = min(diffs)
    denom_lcm = 1
    for d in diffs:
        r = d / base
        frac = Fraction(r).limit_denominator(max_denominator)
        if frac.numerator == 0 or abs(r - float(frac)) > rel_tol * r:
            return None
        denom_lcm = denom_lcm * frac.denominator // math.gcd(denom_lcm, frac.denominator)
        if denom_lcm > max_denominator:
            return None
    step = base / denom_lcm
    for d in diffs:
        k = round(d / step)
        if k == 0 or k > max_multiplier or abs(k * step - d) > rel_tol * max(step, d):
            return None
    return step
