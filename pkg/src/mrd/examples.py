"""Closed-form reproducers for the worked examples.

These serve as golden references for the generic solvers: a binary
symmetric source with a one-sided encoding metric, a pair of parallel
binary sources, a uniform ternary source where a two-layer codebook
recovers the matched trade-off, and a Gaussian source whose true
distortion only scores sign agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import binary_entropy, ternary_entropy
from .ensembles import CurvePoint

__all__ = [
    "TernaryPoint",
    "GaussianPoint",
    "binary_curve",
    "parallel_curve",
    "ternary_matched",
    "ternary_iu",
    "ternary_cc",
    "gaussian_curve",
    "gaussian_rate_nats",
    "gaussian_d0_from_rate",
    "binary_problem",
    "parallel_problem",
    "ternary_problem",
    "DEFAULT_GAUSSIAN_LAMBDAS",
    "TERNARY_Q_UXHAT",
]

LOG2_3 = math.log2(3.0)


def h2_inv_lower(h: float) -> float:
    """Lower root of the binary entropy function, in [0, 1/2].

    The entropy is two-to-one; flip fractions always take the lower root.
    """
    if not (0.0 <= h <= 1.0):
        raise ValueError(f"entropy value must be in [0, 1], got {h!r}")
    if h == 0.0:
        return 0.0
    if h == 1.0:
        return 0.5
    return brentq(lambda d: binary_entropy(d) - h, 1e-300, 0.5, xtol=1e-16)


# ---------------------------------------------------------------------------
# binary symmetric source, one-sided encoding metric
# ---------------------------------------------------------------------------

def binary_curve(rate_bits: float, ensemble: str, tie: str = "pessimistic") -> float:
    """True distortion of the binary example at a rate in [0, 1] bits.

    matched/cc: the flip fraction D with 1 - H2(D) = R (the one-sided
    metric forces symmetric flips, so composition-constrained encoding is
    effectively matched). iid below 1/2 bit: alpha/2 + 1/4 with
    H2(alpha) = 1 - 2R. iid above 1/2 bit: worst-case ties give
    (1 - beta)/2 with H2(beta) = 2 - 2R, uniform ties give 1/4.
    """
    if not (0.0 <= rate_bits <= 1.0):
        raise ValueError(f"rate must be in [0, 1] bits, got {rate_bits!r}")
    if ensemble in ("matched", "cc"):
        return h2_inv_lower(1.0 - rate_bits)
    if ensemble != "iid":
        raise ValueError(f"ensemble must be matched, cc or iid, got {ensemble!r}")
    if tie not in ("pessimistic", "uniform"):
        raise ValueError(f"tie must be pessimistic or uniform, got {tie!r}")
    if rate_bits <= 0.5:
        alpha = h2_inv_lower(1.0 - 2.0 * rate_bits)
        return alpha / 2.0 + 0.25
    if tie == "uniform":
        return 0.25
    beta = h2_inv_lower(2.0 - 2.0 * rate_bits)
    return (1.0 - beta) / 2.0


def binary_problem() -> dict:
    """Source, auxiliary pmf and metrics of the binary example."""
    return {
        "px": np.array([0.5, 0.5]),
        "q": np.array([0.5, 0.5]),
        "d0": np.array([[0.0, 1.0], [0.0, 0.0]]),  # only 0 -> 1 flips penalized
        "d1": np.array([[0.0, 1.0], [1.0, 0.0]]),
    }


# ---------------------------------------------------------------------------
# parallel binary sources
# ---------------------------------------------------------------------------

def parallel_curve(rate_bits: float, lambda_weight: float,
                   ensemble: str = "expurgated") -> float:
    """True distortion for the pair of parallel binary sources, R in [0, 2].

    independent: numerically minimize lam*t1 + (1-lam)*t2 subject to
    (1 - H2(t1)) + (1 - H2(t2)) <= R and return (t1 + t2)/2.
    expurgated/matched: the common flip fraction with 1 - H2(t) = R/2.
    """
    if not (0.0 <= rate_bits <= 2.0):
        raise ValueError(f"rate must be in [0, 2] bits, got {rate_bits!r}")
    if not (0.0 < lambda_weight < 1.0):
        raise ValueError("lambda_weight must lie in (0, 1)")
    if ensemble in ("expurgated", "matched"):
        return h2_inv_lower(1.0 - rate_bits / 2.0)
    if ensemble != "independent":
        raise ValueError(f"unknown ensemble {ensemble!r}")
    t1, t2 = _parallel_independent_split(rate_bits, lambda_weight)
    return (t1 + t2) / 2.0


def _parallel_independent_split(rate_bits: float, lam: float):
    """Minimizing flip pair for independent codewords (grid plus polish)."""
    if rate_bits >= 2.0:
        return 0.0, 0.0
    budget = 2.0 - rate_bits  # total entropy the two flip fractions must carry

    def second(t1):
        need = budget - binary_entropy(t1)
        if need <= 0.0:
            return 0.0
        if need >= 1.0:
            return math.inf
        return h2_inv_lower(need)

    def obj(t1):
        t2 = second(t1)
        return lam * t1 + (1.0 - lam) * t2 if math.isfinite(t2) else math.inf

    grid = np.linspace(1e-9, 0.5, 2001)
    vals = [obj(t) for t in grid]
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    t1 = float(res.x)
    return t1, float(second(t1))


def parallel_problem(lambda_weight: float = 0.3) -> dict:
    """Pair-source problem: alphabet {0,1}^2 flattened as 2*x1 + x2."""
    d0 = np.zeros((4, 4))
    d1 = np.zeros((4, 4))
    for x1 in range(2):
        for x2 in range(2):
            for h1 in range(2):
                for h2 in range(2):
                    d0[2 * x1 + x2, 2 * h1 + h2] = (lambda_weight * (x1 != h1)
                                                    + (1 - lambda_weight) * (x2 != h2))
                    d1[2 * x1 + x2, 2 * h1 + h2] = 0.5 * ((x1 != h1) + (x2 != h2))
    return {
        "px": np.full(4, 0.25),
        "q": np.full(4, 0.25),
        "q1": np.array([0.5, 0.5]),
        "q2": np.array([0.5, 0.5]),
        "psi": np.array([[0, 1], [2, 3]]),  # pair assembly
        "d0": d0,
        "d1": d1,
        "lambda_weight": lambda_weight,
    }


# ---------------------------------------------------------------------------
# uniform ternary source
# ---------------------------------------------------------------------------

TERNARY_Q_UXHAT = np.array([[1 / 3, 1 / 3, 0.0], [0.0, 0.0, 1 / 3]])


@dataclass(frozen=True)
class TernaryPoint:
    """Matched-optimal operating point of the ternary example.

    The off-diagonal masses (p01, p02) obey the stationarity relation
    p01 = p02^2 / (1/3 - 2*p02), and p02 never exceeds 1/9.
    """

    p01: float
    p02: float
    rate_bits: float
    r0_bits: float
    d1: float

    def __post_init__(self):
        if not (0.0 <= self.p02 <= 1.0 / 9.0 + 1e-9):
            raise ValueError(f"p02 = {self.p02!r} outside [0, 1/9]")
        if self.p01 + self.p02 > 1.0 / 3.0 + 1e-9:
            raise ValueError("p01 + p02 must not exceed 1/3")


def _ternary_p01(p02: float) -> float:
    return p02 ** 2 / (1.0 / 3.0 - 2.0 * p02)


def _ternary_mi_bits(p01: float, p02: float) -> float:
    return LOG2_3 - (2.0 * ternary_entropy(3 * p01, 3 * p02)
                     + ternary_entropy(3 * p02, 3 * p02)) / 3.0


def ternary_iu(p02: float) -> float:
    """Cloud-layer information I(X;U) in bits as a function of p02."""
    if not (0.0 <= p02 <= 1.0 / 6.0):
        raise ValueError(f"p02 must be in [0, 1/6], got {p02!r}")
    return LOG2_3 - 2.0 / 3.0 - (2.0 * binary_entropy(3 * p02)
                                 + binary_entropy(6 * p02)) / 3.0


def ternary_matched(rate_bits: float) -> TernaryPoint:
    """Matched operating point at a rate in (0, log2 3) bits.

    Parameterize by p02 in (0, 1/9], fix p01 by stationarity, and bisect
    until the symmetric-coupling information meets the rate.
    """
    if not (0.0 < rate_bits < LOG2_3):
        raise ValueError(f"rate must be in (0, log2 3) bits, got {rate_bits!r}")

    def gap(p02):
        return _ternary_mi_bits(_ternary_p01(p02), p02) - rate_bits

    lo, hi = 1e-13, 1.0 / 9.0
    if gap(lo) < 0 or gap(hi) > 0:
        raise ValueError(f"rate {rate_bits!r} not bracketed by p02 in (0, 1/9]")
    p02 = brentq(gap, lo, hi, xtol=1e-15)
    p01 = _ternary_p01(p02)
    return TernaryPoint(p01=p01, p02=p02, rate_bits=rate_bits,
                        r0_bits=ternary_iu(p02), d1=2.0 * (p01 + p02))


def ternary_cc(rate_bits: float) -> float:
    """Unstructured-codebook distortion of the ternary example.

    The minimizer is symmetric with total leave-probability t per row;
    the rate pins t through log2(3) - H3(t/2, t/2) = R, and the true
    distortion is 2t/3.
    """
    if not (0.0 < rate_bits < LOG2_3):
        raise ValueError(f"rate must be in (0, log2 3) bits, got {rate_bits!r}")

    def gap(t):
        return LOG2_3 - ternary_entropy(t / 2, t / 2) - rate_bits

    t = brentq(gap, 1e-15, 2.0 / 3.0, xtol=1e-15)
    return 2.0 * t / 3.0


def ternary_problem() -> dict:
    return {
        "px": np.full(3, 1 / 3),
        "q": np.full(3, 1 / 3),
        "q_uxhat": TERNARY_Q_UXHAT.copy(),
        "d0": 1.0 - np.eye(3),
        "d1": np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
    }


# ---------------------------------------------------------------------------
# Gaussian source with sign-mismatch true distortion
# ---------------------------------------------------------------------------

DEFAULT_GAUSSIAN_LAMBDAS = tuple((-np.geomspace(0.01, 1000.0, 25)).tolist())


@dataclass(frozen=True)
class GaussianPoint:
    """One sweep point: tilt, correlation, squared-error and sign distortion."""

    lam: float
    rho: float
    d0_value: float
    d1_value: float
    rate_bits: float


def gaussian_rate_nats(d0_level: float, sigma2: float = 1.0, tau2: float = 1.0) -> float:
    """Rate (nats) of squared-error coding of a Gaussian source against
    Gaussian codewords, as an explicit function of the distortion level."""
    if not (0.0 < d0_level < sigma2 + tau2):
        raise ValueError(f"d0_level must be in (0, {sigma2 + tau2}), got {d0_level!r}")
    v = 0.5 * (tau2 + math.sqrt(tau2 ** 2 + 4.0 * d0_level * sigma2))
    return 0.5 * math.log(v / d0_level) - (v - d0_level) * (v - sigma2) / (2.0 * v * tau2)


def gaussian_d0_from_rate(rate_nats: float, sigma2: float = 1.0, tau2: float = 1.0) -> float:
    """Invert the rate expression by bisection; the rate is strictly
    decreasing in the distortion level on (0, sigma2 + tau2)."""
    if rate_nats < 0:
        raise ValueError("rate must be >= 0")
    lo = 1e-12
    hi = sigma2 + tau2 - 1e-12

    def gap(d):
        return gaussian_rate_nats(d, sigma2, tau2) - rate_nats

    if gap(lo) < 0:
        raise ValueError(f"rate {rate_nats!r} nats too large to invert numerically")
    return brentq(gap, lo, hi, xtol=1e-10)


def orthant_mismatch_probability(rho: float) -> float:
    """P[sign(X) != sign(XH)] for a zero-mean bivariate normal pair."""
    if not (-1.0 <= rho <= 1.0):
        raise ValueError("correlation must be in [-1, 1]")
    return 0.5 - math.asin(rho) / math.pi


def gaussian_curve(lambda_grid=DEFAULT_GAUSSIAN_LAMBDAS, sigma2: float = 1.0,
                   tau2: float = 1.0) -> list:
    """Sweep of the Gaussian example over tilt values lam < 0.

    Per point: quadratic-form coefficients a = 1/(2*sigma2) - lam,
    b = 1/(2*tau2) - lam, c = 2*lam; spreads (sig_x)^2 =
    sqrt(2b/(4ab - c^2)) and (sig_xh)^2 = sqrt(2a/(4ab - c^2)) with
    correlation rho = -c/(2*sqrt(ab)); squared-error level by expanding
    E[(X - XH)^2]; sign distortion from the orthant probability; rate
    from the explicit distortion-rate expression.
    """
    if sigma2 <= 0 or tau2 <= 0:
        raise ValueError("variances must be positive")
    out = []
    for lam in lambda_grid:
        lam = float(lam)
        if lam >= 0:
            raise ValueError(f"tilt grid values must be negative, got {lam!r}")
        a = 1.0 / (2.0 * sigma2) - lam
        b = 1.0 / (2.0 * tau2) - lam
        c = 2.0 * lam
        det = 4.0 * a * b - c * c
        var_x = math.sqrt(2.0 * b / det)
        var_xh = math.sqrt(2.0 * a / det)
        rho = -c / (2.0 * math.sqrt(a * b))
        d0_level = var_x + var_xh - 2.0 * rho * math.sqrt(var_x * var_xh)
        d1_val = orthant_mismatch_probability(rho)
        rate = gaussian_rate_nats(d0_level, sigma2, tau2) / math.log(2.0)
        out.append(GaussianPoint(lam=lam, rho=rho, d0_value=d0_level,
                                 d1_value=d1_val, rate_bits=rate))
    return out


def gaussian_matched_points(curve) -> list:
    """Sign-compression reference at the same distortion levels: a sweep
    point's d1 paired with the binary rate 1 - H2(d1)."""
    out = []
    for pt in curve:
        d = min(max(pt.d1_value, 0.0), 0.5)
        out.append(CurvePoint(rate_bits=1.0 - binary_entropy(d), d0_value=d,
                              d1_value=d, tie_bracket=(d, d), ensemble="matched-sign"))
    return out
