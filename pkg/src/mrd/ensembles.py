"""Achievable-distortion calculators for the four random-coding ensembles.

Each calculator runs the two-stage solve from :mod:`mrd.solvers`: stage 1
minimizes the encoding metric E[d0] over the ensemble's feasible set of
joint distributions, stage 2 takes the worst-case true distortion E[d1]
over the argmin (tie) set. Rates are in bits on this surface and are
converted to nats at the solver boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._util import map_maybe_parallel
from .core import LN2, as_array
from .errors import BudgetError
from .solvers import ConstraintSet, max_d1_over_ties, min_d0_cc, min_d0_iid, min_d0_multi

__all__ = [
    "EnsembleSpec",
    "CurvePoint",
    "d1bar_cc",
    "d1bar_iid",
    "d1bar_superposition",
    "d1bar_expurgated",
    "optimize_q_grid",
    "sweep_rate_split",
]

KINDS = ("cc", "iid", "superposition", "expurgated")


@dataclass(frozen=True)
class EnsembleSpec:
    """Tagged description of one codebook ensemble.

    ``kind`` selects which auxiliary fields apply: ``q`` for cc/iid,
    ``q_uxhat`` plus a rate split for superposition, ``q1``/``q2``/``psi``
    plus a split for expurgated parallel coding. ``psi`` is a lookup
    table mapping index pairs to reconstruction symbols.
    """

    kind: str
    q: np.ndarray | None = None
    q_uxhat: np.ndarray | None = None
    q1: np.ndarray | None = None
    q2: np.ndarray | None = None
    psi: np.ndarray | None = None
    rate_split: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.rate_split is not None:
            if len(self.rate_split) != 2 or any(r < 0 for r in self.rate_split):
                raise ValueError("rate_split must be two non-negative components")
        if self.kind in ("cc", "iid"):
            if self.q is None:
                raise ValueError(f"{self.kind} ensemble needs q")
            object.__setattr__(self, "q", np.ravel(as_array(self.q)))
        elif self.kind == "superposition":
            if self.q_uxhat is None:
                raise ValueError("superposition ensemble needs q_uxhat")
            object.__setattr__(self, "q_uxhat", as_array(self.q_uxhat))
        else:
            if self.q1 is None or self.q2 is None or self.psi is None:
                raise ValueError("expurgated ensemble needs q1, q2 and psi")
            object.__setattr__(self, "q1", np.ravel(as_array(self.q1)))
            object.__setattr__(self, "q2", np.ravel(as_array(self.q2)))
            psi = np.asarray(self.psi, dtype=int)
            if psi.shape != (self.q1.size, self.q2.size) or psi.min() < 0:
                raise ValueError("psi must be a total lookup table over XH1 x XH2")
            object.__setattr__(self, "psi", psi)

    def sort_key(self):
        parts = []
        for a in (self.q, self.q_uxhat, self.q1, self.q2):
            if a is not None:
                parts.extend(np.ravel(a).tolist())
        return tuple(parts)


@dataclass(frozen=True)
class CurvePoint:
    """One analytic point: rate in bits, stage-1 d0, pessimistic d1, bracket."""

    rate_bits: float
    d0_value: float
    d1_value: float
    tie_bracket: tuple
    ensemble: str
    tie_rule: str = "pessimistic"

    def __post_init__(self):
        lo, hi = self.tie_bracket
        vals = (self.rate_bits, self.d0_value, self.d1_value, lo, hi)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("curve point fields must be finite")
        if self.d0_value < -1e-12 or self.d1_value < -1e-12:
            raise ValueError("distortions must be non-negative")
        if not (lo - 1e-9 <= self.d1_value <= hi + 1e-9):
            raise ValueError(f"d1_value {self.d1_value} outside tie bracket {(lo, hi)}")


def _two_stage(cs: ConstraintSet, stage1, d0, d1, rate_bits, tag, eps_tie, output_map=None):
    tie = max_d1_over_ties(cs, d0, d1, stage1.d0_star, eps_tie=eps_tie,
                           output_map=output_map, minimizer=stage1.minimizer)
    return CurvePoint(rate_bits=float(rate_bits), d0_value=stage1.d0_star,
                      d1_value=tie.d1_max, tie_bracket=(tie.d1_min, tie.d1_max),
                      ensemble=tag)


def d1bar_cc(px, q, d0, d1, rate_bits: float, eps_tie: float = 1e-9) -> CurvePoint:
    """Constant-composition ensemble bound at the given rate."""
    cap = rate_bits * LN2
    s1 = min_d0_cc(px, q, d0, cap)
    cs = ConstraintSet.cc(px, q, cap)
    return _two_stage(cs, s1, d0, d1, rate_bits, "cc", eps_tie)


def d1bar_iid(px, q, d0, d1, rate_bits: float, eps_tie: float = 1e-9) -> CurvePoint:
    """Independent-entry ensemble bound at the given rate."""
    cap = rate_bits * LN2
    s1 = min_d0_iid(px, q, d0, cap)
    cs = ConstraintSet.iid(px, q, cap)
    return _two_stage(cs, s1, d0, d1, rate_bits, "iid", eps_tie)


def d1bar_superposition(px, q_uxhat, d0, d1, r0_bits: float, r1_bits: float,
                        eps_tie: float = 1e-9) -> CurvePoint:
    """Two-layer (cloud + satellite) ensemble bound at total rate r0 + r1."""
    if r0_bits < 0 or r1_bits < 0:
        raise ValueError("rate components must be >= 0")
    cs = ConstraintSet.superposition(px, q_uxhat, r0_bits * LN2, (r0_bits + r1_bits) * LN2)
    s1 = min_d0_multi(cs, d0)
    return _two_stage(cs, s1, d0, d1, r0_bits + r1_bits, "superposition", eps_tie)


def d1bar_expurgated(px, q1, q2, psi, d0, d1, r1_bits: float, r2_bits: float,
                     eps_tie: float = 1e-9) -> CurvePoint:
    """Expurgated parallel-coding bound at total rate r1 + r2.

    Distortions are evaluated through the entrywise map ``psi``.
    """
    if r1_bits < 0 or r2_bits < 0:
        raise ValueError("rate components must be >= 0")
    psi = np.asarray(psi, dtype=int)
    cs = ConstraintSet.expurgated(px, q1, q2, r1_bits * LN2, r2_bits * LN2)
    s1 = min_d0_multi(cs, d0, output_map=psi)
    return _two_stage(cs, s1, d0, d1, r1_bits + r2_bits, "expurgated", eps_tie,
                      output_map=psi)


def _simplex_grid(k: int, m: int):
    """All pmfs with entries i/m over a k-symbol alphabet, lexicographic."""
    for comp in itertools.combinations_with_replacement(range(k), m):
        counts = np.bincount(comp, minlength=k)
        yield counts / m


def _grid_size(k: int, m: int) -> int:
    from math import comb
    return comb(m + k - 1, k - 1)


def optimize_q_grid(template: EnsembleSpec, px, d0, d1, rate_bits: float,
                    grid_resolution: int, eps_tie: float = 1e-9):
    """Sweep the ensemble's auxiliary distribution(s) over a simplex grid.

    Returns ``(best_point, best_spec)``. Heuristic only: the sweep is a
    uniform grid with ``grid_resolution`` steps per simplex, ties broken
    toward the lexicographically smallest spec. Grids beyond 1e6 points
    are refused.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    px = np.ravel(as_array(px))
    d0 = as_array(d0)
    d1 = as_array(d1)
    m = grid_resolution
    if template.kind in ("cc", "iid"):
        k = d0.shape[1]
        npts = _grid_size(k, m)
        if npts > 1e6:
            raise BudgetError(f"simplex grid would have {npts} points (limit 1e6)")
        specs = (EnsembleSpec(template.kind, q=q) for q in _simplex_grid(k, m))
    elif template.kind == "superposition":
        nu, nh = template.q_uxhat.shape
        npts = _grid_size(nu * nh, m)
        if npts > 1e6:
            raise BudgetError(f"simplex grid would have {npts} points (limit 1e6)")
        specs = (EnsembleSpec("superposition", q_uxhat=q.reshape(nu, nh),
                              rate_split=template.rate_split)
                 for q in _simplex_grid(nu * nh, m))
    else:
        k1 = template.q1.size
        k2 = template.q2.size
        npts = _grid_size(k1, m) * _grid_size(k2, m)
        if npts > 1e6:
            raise BudgetError(f"simplex grid would have {npts} points (limit 1e6)")
        specs = (EnsembleSpec("expurgated", q1=a, q2=b, psi=template.psi,
                              rate_split=template.rate_split)
                 for a in _simplex_grid(k1, m) for b in _simplex_grid(k2, m))

    def evaluate(spec):
        try:
            return _eval_spec(spec, px, d0, d1, rate_bits, eps_tie)
        except (ValueError, ArithmeticError):
            return None

    ordered = sorted(specs, key=EnsembleSpec.sort_key)
    results = map_maybe_parallel(evaluate, ordered)
    best = None
    best_spec = None
    for spec, point in zip(ordered, results):
        if point is None:
            continue
        if best is None or point.d1_value < best.d1_value - 1e-15:
            best, best_spec = point, spec
    if best is None:
        raise ValueError("no grid point produced a feasible solve")
    return best, best_spec


def _eval_spec(spec, px, d0, d1, rate_bits, eps_tie):
    if spec.kind == "cc":
        return d1bar_cc(px, spec.q, d0, d1, rate_bits, eps_tie)
    if spec.kind == "iid":
        return d1bar_iid(px, spec.q, d0, d1, rate_bits, eps_tie)
    if spec.kind == "superposition":
        r0, r1 = spec.rate_split if spec.rate_split else (rate_bits / 2, rate_bits / 2)
        return d1bar_superposition(px, spec.q_uxhat, d0, d1, r0, r1, eps_tie)
    r1, r2 = spec.rate_split if spec.rate_split else (rate_bits / 2, rate_bits / 2)
    return d1bar_expurgated(px, spec.q1, spec.q2, spec.psi, d0, d1, r1, r2, eps_tie)


def sweep_rate_split(kind: str, px, d0, d1, rate_bits: float, step_bits: float | None = None,
                     eps_tie: float = 1e-9, **aux):
    """Best split of a total rate for the superposition/expurgated ensembles.

    Sweeps the first rate component over a uniform grid (default step
    R/20) and returns the point with the smallest pessimistic d1.
    """
    if kind not in ("superposition", "expurgated"):
        raise ValueError("rate-split sweep applies to superposition/expurgated only")
    step = step_bits if step_bits is not None else rate_bits / 20
    if step <= 0:
        raise ValueError("step must be positive")
    firsts = np.arange(0.0, rate_bits + step / 2, step)
    best = None
    best_split = None
    for ra in firsts:
        rb = max(rate_bits - ra, 0.0)
        if kind == "superposition":
            point = d1bar_superposition(px, aux["q_uxhat"], d0, d1, ra, rb, eps_tie)
        else:
            point = d1bar_expurgated(px, aux["q1"], aux["q2"], aux["psi"], d0, d1,
                                     ra, rb, eps_tie)
        if best is None or point.d1_value < best.d1_value - 1e-15:
            best, best_split = point, (float(ra), float(rb))
    return best, best_split
