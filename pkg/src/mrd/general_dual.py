"""General-alphabet solver for the independent-codeword ensemble.

Works through the dual of the divergence-constrained problem: the
source-averaged log moment generating function of the encoding metric,

    lmgf(lam) = E_X[ log E_Q[ exp(lam * d0(X, XH)) ] ],   lam <= 0,

whose derivative sweeps the achievable encoding distortion. For a target
d0-level the tilt parameter solves lmgf'(lam) = D0, the rate is
``lam * D0 - lmgf(lam)`` nats, and the true distortion is the mean of d1
under the per-source-symbol tilted joint. Models plug in closed forms,
exact finite-alphabet arrays, or samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .core import LN2, as_array
from .ensembles import CurvePoint
from .errors import SamplingBudgetError

__all__ = [
    "ClosedForm",
    "GeneralModel",
    "TiltedJoint",
    "log_mgf",
    "log_mgf_derivative",
    "solve_lambda_star",
    "rate_from_d0",
    "r_max_nats",
    "mismatched_d1",
    "discrete_model",
    "gaussian_quadratic_model",
    "gaussian_sign_model",
]

N_OUTER_DEFAULT = 10_000
N_INNER_DEFAULT = 1_000


@dataclass(frozen=True)
class ClosedForm:
    """Analytic bundle for a model: the log-MGF, its derivative, and the
    true distortion under the tilted joint, all as functions of the tilt."""

    log_mgf: Callable
    log_mgf_derivative: Callable | None = None
    tilted_d1: Callable | None = None


@dataclass(frozen=True)
class GeneralModel:
    """Pluggable source/codeword model with two distortion functions.

    ``d0_prod`` and ``d1_prod`` are the product-distribution averages of
    the two metrics and must be finite. ``discrete`` optionally holds
    (px, q, d0, d1) arrays for exact finite-alphabet evaluation.
    ``tilted_params`` may describe the tilted joint in closed form (used
    for reporting and cross-checks).
    """

    name: str
    d0_prod: float
    d1_prod: float
    source_sampler: Callable | None = None
    q_sampler: Callable | None = None
    d0_eval: Callable | None = None
    d1_eval: Callable | None = None
    closed_form: ClosedForm | None = None
    discrete: tuple | None = None
    ess_min_d0: float = 0.0
    r_max_nats_override: float | None = None
    tilted_params: Callable | None = None

    def __post_init__(self):
        if not (math.isfinite(self.d0_prod) and math.isfinite(self.d1_prod)):
            raise ValueError("d0_prod and d1_prod must be finite at construction")
        if self.closed_form is None and self.discrete is None and (
                self.source_sampler is None or self.q_sampler is None):
            raise ValueError("model needs a closed form, discrete arrays, or samplers")


@dataclass(frozen=True)
class TiltedJoint:
    """Tilt parameter, its encoding distortion, and a joint descriptor."""

    lambda_star: float
    d0_value: float
    representation: dict

    def __post_init__(self):
        if self.lambda_star > 0:
            raise ValueError("lambda_star must be <= 0")


def _discrete_arrays(model):
    px, q, d0, d1 = model.discrete
    return (np.ravel(as_array(px)), np.ravel(as_array(q)), as_array(d0), as_array(d1))


def _discrete_log_mgf(px, q, d0, lam):
    return float(np.dot(px, logsumexp(np.log(q)[None, :] + lam * d0, axis=1)))


def _discrete_tilt(px, q, d0, lam):
    W = np.log(q)[None, :] + lam * d0
    lz = logsumexp(W, axis=1)
    return px[:, None] * np.exp(W - lz[:, None])


def log_mgf(model: GeneralModel, lam: float, rng=None,
            n_outer: int = N_OUTER_DEFAULT, n_inner: int = N_INNER_DEFAULT,
            se_tol: float = 5e-3) -> float:
    """lmgf(lam) in nats. Closed form when available, exact for discrete
    models, otherwise nested Monte Carlo over (X, XH).

    Raises SamplingBudgetError when the Monte Carlo standard error
    estimate exceeds ``se_tol``.
    """
    if lam > 0:
        raise ValueError("lam must be <= 0")
    if lam == 0.0:
        return 0.0
    if model.closed_form is not None:
        return float(model.closed_form.log_mgf(lam))
    if model.discrete is not None:
        px, q, d0, _ = _discrete_arrays(model)
        return _discrete_log_mgf(px, q, d0, lam)
    rng = rng if rng is not None else np.random.default_rng(0)
    xs = model.source_sampler(rng, n_outer)
    vals = np.empty(n_outer)
    for i, x in enumerate(xs):
        hs = model.q_sampler(rng, n_inner)
        vals[i] = logsumexp(lam * model.d0_eval(x, hs)) - math.log(n_inner)
    se = float(vals.std(ddof=1) / math.sqrt(n_outer))
    if se > se_tol:
        raise SamplingBudgetError(
            f"log-MGF standard error {se:.2e} exceeds tolerance {se_tol:.2e}; "
            f"increase n_outer/n_inner")
    return float(vals.mean())


def log_mgf_derivative(model: GeneralModel, lam: float, rng=None, **mc_kwargs) -> float:
    """d lmgf / d lam, the encoding distortion of the tilted joint."""
    if lam > 0:
        raise ValueError("lam must be <= 0")
    cf = model.closed_form
    if cf is not None and cf.log_mgf_derivative is not None:
        return float(cf.log_mgf_derivative(lam))
    if model.discrete is not None:
        px, q, d0, _ = _discrete_arrays(model)
        P = _discrete_tilt(px, q, d0, lam)
        return float(np.sum(P * d0))
    h = 1e-6 * max(1.0, abs(lam))
    hi = min(lam + h, 0.0)
    lo = lam - h - (h - (hi - lam))  # keep the stencil symmetric at the lam=0 boundary
    f_hi = log_mgf(model, hi, rng=rng, **mc_kwargs)
    f_lo = log_mgf(model, lo, rng=rng, **mc_kwargs)
    return float((f_hi - f_lo) / (hi - lo))


def solve_lambda_star(model: GeneralModel, d0_level: float, rng=None,
                      tol: float | None = None, **mc_kwargs) -> TiltedJoint:
    """Tilt parameter with lmgf'(lam) = d0_level on (-inf, 0].

    ``d0_level`` must lie strictly between the essential-minimum level
    and the product average; lmgf' is strictly increasing in lam there,
    so a bracketed bisection applies.
    """
    lo_level = model.ess_min_d0
    if not (lo_level < d0_level < model.d0_prod):
        raise ValueError(
            f"d0_level must lie in the open interval "
            f"({lo_level!r}, {model.d0_prod!r}), got {d0_level!r}")
    if tol is None:
        tol = 1e-10 if (model.closed_form or model.discrete) else 1e-6

    def f(lam):
        return log_mgf_derivative(model, lam, rng=rng, **mc_kwargs) - d0_level

    lo = -1.0
    while f(lo) > 0:
        lo *= 2.0
        if lo < -1e12:
            raise ValueError("could not bracket the tilt parameter; "
                             "d0_level may sit at the essential-minimum level")
    lam = brentq(f, lo, 0.0, xtol=tol)
    d0_val = log_mgf_derivative(model, lam, rng=rng, **mc_kwargs)
    return TiltedJoint(lambda_star=float(lam), d0_value=float(d0_val),
                       representation=_describe_tilt(model, lam, rng=rng))


def _describe_tilt(model, lam, rng=None, n_outer=256, n_inner=128):
    if model.tilted_params is not None:
        rep = dict(model.tilted_params(lam))
        rep.setdefault("kind", "closed_form")
        return rep
    if model.discrete is not None:
        px, q, d0, _ = _discrete_arrays(model)
        return {"kind": "discrete", "joint": _discrete_tilt(px, q, d0, lam)}
    if model.source_sampler is None or model.q_sampler is None:
        return {"kind": "closed_form"}
    # weighted sample cloud: per source sample, inner codeword samples
    # carry self-normalized tilt weights
    rng = rng if rng is not None else np.random.default_rng(0)
    xs = model.source_sampler(rng, n_outer)
    hs = np.stack([model.q_sampler(rng, n_inner) for _ in range(n_outer)])
    lw = lam * np.stack([model.d0_eval(x, h) for x, h in zip(xs, hs)])
    lw -= lw.max(axis=1, keepdims=True)
    return {"kind": "sampled", "x": xs, "xhat": hs, "log_weights": lw}


def rate_from_d0(model: GeneralModel, d0_level: float, rng=None, **mc_kwargs) -> float:
    """Rate in nats needed to reach the given encoding distortion:
    the stationary value lam* * D0 - lmgf(lam*)."""
    tilt = solve_lambda_star(model, d0_level, rng=rng, **mc_kwargs)
    lam = tilt.lambda_star
    return float(lam * d0_level - log_mgf(model, lam, rng=rng, **mc_kwargs))


def r_max_nats(model: GeneralModel, rng=None, **mc_kwargs) -> float:
    """Rate threshold below which the dual formulation is valid.

    Computed exactly for discrete models (the divergence of the
    cheapest-row coupling); otherwise the rate is followed along a
    geometric sequence of d0-levels shrinking toward the essential
    minimum and extrapolated, diverging sequences giving +inf. Models
    may override with a closed form.
    """
    if model.r_max_nats_override is not None:
        return float(model.r_max_nats_override)
    if model.discrete is not None:
        px, q, d0, _ = _discrete_arrays(model)
        out = 0.0
        for i in range(px.size):
            sel = d0[i] <= d0[i].min() + 1e-15
            out -= px[i] * math.log(q[sel].sum())
        return float(out)
    ess = model.ess_min_d0
    span = model.d0_prod - ess
    rates = []
    for k in range(2, 48):
        d0_level = ess + span * 2.0 ** (-k)
        rates.append(rate_from_d0(model, d0_level, rng=rng, **mc_kwargs))
        if len(rates) >= 3:
            inc1 = rates[-2] - rates[-3]
            inc2 = rates[-1] - rates[-2]
            if inc2 < 1e-9:
                return float(rates[-1])
            if inc1 > 0 and inc2 / inc1 >= 0.98:
                return math.inf
    ratio = inc2 / inc1 if inc1 > 0 else 0.0
    return float(rates[-1] + inc2 * ratio / max(1.0 - ratio, 1e-9))


def mismatched_d1(model: GeneralModel, rate_nats: float, rng=None,
                  n_outer: int = N_OUTER_DEFAULT, n_inner: int = N_INNER_DEFAULT) -> CurvePoint:
    """Achievable true distortion of the independent-codeword ensemble at
    the given rate (nats), through the dual formulation.

    Valid for rates in (0, r_max); beyond r_max the argmin set is no
    longer a single joint and this route does not apply.
    """
    rmax = r_max_nats(model, rng=rng)
    if not (0.0 < rate_nats < rmax):
        raise ValueError(
            f"rate {rate_nats!r} nats outside (0, {rmax!r}); the tie set is "
            f"not unique beyond r_max, use the finite-alphabet solver instead")
    ess = model.ess_min_d0
    span = model.d0_prod - ess

    def gap(d0_level):
        return rate_from_d0(model, d0_level, rng=rng) - rate_nats

    hi = model.d0_prod - 1e-12 * max(1.0, span)
    lo = None
    for k in range(1, 60):
        cand = ess + span * 2.0 ** (-k)
        if gap(cand) >= 0:
            lo = cand
            break
    if lo is None:
        raise ValueError("could not bracket the d0-level for the requested rate")
    d0_level = brentq(gap, lo, hi, xtol=1e-13)
    tilt = solve_lambda_star(model, d0_level, rng=rng)
    d1_val = _tilted_d1(model, tilt, rng=rng, n_outer=n_outer, n_inner=n_inner)
    return CurvePoint(rate_bits=rate_nats / LN2, d0_value=float(d0_level),
                      d1_value=float(d1_val), tie_bracket=(float(d1_val), float(d1_val)),
                      ensemble=f"iid-general:{model.name}")


def _tilted_d1(model, tilt, rng=None, n_outer=N_OUTER_DEFAULT, n_inner=N_INNER_DEFAULT):
    lam = tilt.lambda_star
    cf = model.closed_form
    if cf is not None and cf.tilted_d1 is not None:
        return float(cf.tilted_d1(lam))
    if model.discrete is not None:
        px, q, d0, d1 = _discrete_arrays(model)
        P = _discrete_tilt(px, q, d0, lam)
        return float(np.sum(P * d1))
    # self-normalized importance weights under the tilt, per source sample
    rng = rng if rng is not None else np.random.default_rng(0)
    xs = model.source_sampler(rng, n_outer)
    acc = np.empty(n_outer)
    for i, x in enumerate(xs):
        hs = model.q_sampler(rng, n_inner)
        lw = lam * model.d0_eval(x, hs)
        lw -= lw.max()
        w = np.exp(lw)
        acc[i] = float(np.dot(w, model.d1_eval(x, hs)) / w.sum())
    return float(acc.mean())


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def discrete_model(px, q, d0, d1, name: str = "discrete") -> GeneralModel:
    """Exact finite-alphabet model built from pmfs and distortion matrices."""
    px = np.ravel(as_array(px))
    q = np.ravel(as_array(q))
    d0 = as_array(d0)
    d1 = as_array(d1)
    keep = q > 0
    if not np.all(keep):
        q, d0, d1 = q[keep], d0[:, keep], d1[:, keep]
    ref = np.outer(px, q)
    ess = float(np.dot(px, d0.min(axis=1)))
    return GeneralModel(
        name=name,
        d0_prod=float(np.sum(ref * d0)),
        d1_prod=float(np.sum(ref * d1)),
        discrete=(px, q, d0, d1),
        ess_min_d0=ess,
    )


def _gaussian_lmgf(sigma2, tau2):
    def lmgf(lam):
        u = 1.0 - 2.0 * lam * tau2
        return -0.5 * math.log(u) + lam * sigma2 / u

    def lmgf_prime(lam):
        u = 1.0 - 2.0 * lam * tau2
        return tau2 / u + sigma2 / u ** 2

    return lmgf, lmgf_prime


def _gaussian_tilt_params(sigma2, tau2):
    """Second moments of the tilted joint for squared-error encoding of a
    Gaussian source against Gaussian codewords.

    The per-source-symbol normalizer contributes an extra quadratic in x,
    so the source variance is preserved exactly.
    """
    def params(lam):
        u = 1.0 - 2.0 * lam * tau2
        var_xh = tau2 / u + 4.0 * lam ** 2 * sigma2 * tau2 ** 2 / u ** 2
        cov = -2.0 * lam * sigma2 * tau2 / u
        rho = cov / math.sqrt(sigma2 * var_xh)
        return {"kind": "bivariate_normal", "var_x": sigma2, "var_xhat": var_xh,
                "cov": cov, "rho": rho}

    return params


def gaussian_quadratic_model(sigma2: float = 1.0, tau2: float = 1.0) -> GeneralModel:
    """Gaussian source and codewords with squared error for both metrics."""
    if sigma2 <= 0 or tau2 <= 0:
        raise ValueError("variances must be positive")
    lmgf, lmgf_prime = _gaussian_lmgf(sigma2, tau2)
    return GeneralModel(
        name="gaussian-quadratic",
        d0_prod=sigma2 + tau2,
        d1_prod=sigma2 + tau2,
        source_sampler=lambda rng, n: rng.normal(0.0, math.sqrt(sigma2), n),
        q_sampler=lambda rng, n: rng.normal(0.0, math.sqrt(tau2), n),
        d0_eval=lambda x, h: (x - h) ** 2,
        d1_eval=lambda x, h: (x - h) ** 2,
        closed_form=ClosedForm(lmgf, lmgf_prime, tilted_d1=lmgf_prime),
        ess_min_d0=0.0,
        r_max_nats_override=math.inf,
        tilted_params=_gaussian_tilt_params(sigma2, tau2),
    )


def gaussian_sign_model(sigma2: float = 1.0, tau2: float = 1.0) -> GeneralModel:
    """Gaussian source, squared-error encoding, sign-mismatch true distortion.

    Under the tilt the pair stays jointly Gaussian, so the sign-mismatch
    probability is the orthant value 1/2 - arcsin(rho)/pi.
    """
    if sigma2 <= 0 or tau2 <= 0:
        raise ValueError("variances must be positive")
    lmgf, lmgf_prime = _gaussian_lmgf(sigma2, tau2)
    params = _gaussian_tilt_params(sigma2, tau2)

    def tilted_d1(lam):
        rho = params(lam)["rho"]
        return 0.5 - math.asin(rho) / math.pi

    return GeneralModel(
        name="gaussian-sign",
        d0_prod=sigma2 + tau2,
        d1_prod=0.5,
        source_sampler=lambda rng, n: rng.normal(0.0, math.sqrt(sigma2), n),
        q_sampler=lambda rng, n: rng.normal(0.0, math.sqrt(tau2), n),
        d0_eval=lambda x, h: (x - h) ** 2,
        d1_eval=lambda x, h: (np.sign(x) != np.sign(h)).astype(float),
        closed_form=ClosedForm(lmgf, lmgf_prime, tilted_d1=tilted_d1),
        ess_min_d0=0.0,
        r_max_nats_override=math.inf,
        tilted_params=params,
    )
