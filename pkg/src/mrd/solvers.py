"""Two-stage constrained optimizers over joint distributions.

Stage 1 minimizes the encoding distortion E[d0] over joints with fixed
marginals and one or more divergence caps. For the single-cap two-axis
problems the minimizer lies in a tilted exponential family, so stage 1
runs an exponential tilt with marginal rescaling and an outer bisection
on the tilt parameter. The multi-cap three-axis problems are solved as
exponential-cone programs.

Stage 2 evaluates the worst-case (and best-case) true distortion E[d1]
over the numerical tie set, i.e. feasible joints whose E[d0] is within
a small slack of the stage-1 optimum. Both directions are linear
objectives over a convex set, so each is solved as a cone program, with
the stage-1 minimizer kept as a guaranteed-feasible candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import as_array, distortion_tensor, kl_divergence_nats
from .errors import ConvergenceError

__all__ = [
    "ConstraintSet",
    "Stage1Result",
    "TieResult",
    "sinkhorn_tilt",
    "min_d0_cc",
    "min_d0_iid",
    "min_d0_multi",
    "max_d1_over_ties",
]

# numerical knobs
_DIV_TOL = 1e-10          # divergence gap tolerance for the tilt bisection
_SINKHORN_TOL = 1e-12
_CAP_EQ_TOL = 1e-14       # caps at or below this are treated as hard product constraints
_FEAS_TOL = 1e-6          # acceptance tolerance when validating cone-solver output


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible set for a stage-1 problem.

    The joint lives on axes (X, *other). ``x_marginal`` is always pinned.
    When ``pin_other`` is true the marginal over the non-X axes is pinned
    to ``other_ref``; otherwise ``other_ref`` only serves as the reference
    in the divergence cap (independent-codeword style).

    Each cap ``(axes, cap_nats)`` bounds D(P_{X,axes} || px x ref_axes),
    where ``axes`` indexes into the non-X axes and ``ref_axes`` is the
    corresponding marginal of ``other_ref``. With pinned marginals these
    divergences equal the mutual informations I(X; axes).
    """

    x_marginal: np.ndarray
    other_shape: tuple
    other_ref: np.ndarray
    pin_other: bool
    caps: tuple
    product_structure_required: bool = False

    def __post_init__(self):
        px = np.ravel(as_array(self.x_marginal))
        ref = as_array(self.other_ref)
        shape = tuple(int(s) for s in self.other_shape)
        if ref.shape != shape:
            raise ValueError(f"other_ref shape {ref.shape} != other_shape {shape}")
        if abs(px.sum() - 1) > 1e-9 or abs(ref.sum() - 1) > 1e-9:
            raise ValueError("marginals must sum to 1")
        caps = tuple((tuple(int(a) for a in axes), float(c)) for axes, c in self.caps)
        for axes, c in caps:
            if c < 0:
                raise ValueError(f"divergence caps must be >= 0, got {c}")
            if not axes or any(a < 0 or a >= len(shape) for a in axes) or len(set(axes)) != len(axes):
                raise ValueError(f"invalid cap axis group {axes!r}")
        if not self.pin_other:
            if len(caps) != 1 or set(caps[0][0]) != set(range(len(shape))):
                raise ValueError("without a pinned output marginal, exactly one cap over "
                                 "all non-source axes is supported")
        object.__setattr__(self, "x_marginal", px)
        object.__setattr__(self, "other_ref", ref)
        object.__setattr__(self, "other_shape", shape)
        object.__setattr__(self, "caps", caps)

    @property
    def shape(self) -> tuple:
        return (self.x_marginal.size,) + self.other_shape

    @classmethod
    def cc(cls, px, q, cap_nats: float) -> "ConstraintSet":
        """Both marginals pinned, one mutual-information cap."""
        q = np.ravel(as_array(q))
        return cls(px, (q.size,), q, True, (((0,), cap_nats),))

    @classmethod
    def iid(cls, px, q, cap_nats: float) -> "ConstraintSet":
        """Source marginal pinned only; divergence to px x q capped."""
        q = np.ravel(as_array(q))
        return cls(px, (q.size,), q, False, (((0,), cap_nats),))

    @classmethod
    def superposition(cls, px, q_uxhat, r0_nats: float, rtot_nats: float) -> "ConstraintSet":
        """Pinned (U, XH) marginal with caps on I(X;U) and I(X;U,XH)."""
        quh = as_array(q_uxhat)
        if quh.ndim != 2:
            raise ValueError("q_uxhat must be 2-D over (U, XH)")
        return cls(px, quh.shape, quh, True,
                   (((0,), r0_nats), ((0, 1), rtot_nats)))

    @classmethod
    def expurgated(cls, px, q1, q2, r1_nats: float, r2_nats: float) -> "ConstraintSet":
        """Pinned product (XH1, XH2) marginal with per-branch and joint caps."""
        q1 = np.ravel(as_array(q1))
        q2 = np.ravel(as_array(q2))
        ref = np.outer(q1, q2)
        return cls(px, ref.shape, ref, True,
                   (((0,), r1_nats), ((1,), r2_nats), ((0, 1), r1_nats + r2_nats)),
                   product_structure_required=True)


@dataclass(frozen=True)
class Stage1Result:
    """Outcome of a stage-1 minimization.

    ``d0_star`` is recomputed from the returned minimizer, so the two are
    consistent by construction. ``multipliers`` holds one value <= 0 per
    cap (0 when the cap is slack).
    """

    d0_star: float
    minimizer: np.ndarray
    multipliers: tuple
    active_flags: tuple
    cap_values: tuple = ()
    residual: float = 0.0


@dataclass(frozen=True)
class TieResult:
    """Worst/best true distortion over the stage-1 tie set."""

    d1_max: float
    d1_min: float
    d1_at_minimizer: float | None = None
    solver_ok: bool = True

    def __float__(self):
        return self.d1_max


# ---------------------------------------------------------------------------
# tilted-family machinery (two-axis problems)
# ---------------------------------------------------------------------------

def sinkhorn_tilt(px, q, d0, lam: float, tol: float = _SINKHORN_TOL,
                  max_iter: int = 200_000) -> np.ndarray:
    """Joint of the form u(x) px(x) q(xh) exp(lam*d0) v(xh) with marginals (px, q).

    Alternating marginal rescaling in the log domain. Requires strictly
    positive marginals, tol > 0 and lam <= 0.
    """
    px = np.ravel(as_array(px))
    q = np.ravel(as_array(q))
    d0 = as_array(d0)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lam > 0:
        raise ValueError("tilt parameter must be <= 0")
    if np.any(px <= 0) or np.any(q <= 0):
        raise ValueError("sinkhorn_tilt needs strictly positive marginals")
    if lam == 0.0:
        return np.outer(px, q)
    lpx = np.log(px)
    lq = np.log(q)
    K = lam * d0
    f = np.zeros(px.size)
    g = np.zeros(q.size)
    res = np.inf
    for _ in range(max_iter):
        f = -logsumexp(K + (lq + g)[None, :], axis=1)
        g = -logsumexp(K + (lpx + f)[:, None], axis=0)
        P = np.exp((lpx + f)[:, None] + K + (lq + g)[None, :])
        res = max(abs(P.sum(axis=1) - px).max(), abs(P.sum(axis=0) - q).max())
        if res < tol:
            return P
    raise ConvergenceError(
        f"marginal scaling did not reach tol={tol} (residual {res:.3e})", residual=res)


def _strip_support(px, q):
    px = np.ravel(as_array(px))
    q = np.ravel(as_array(q))
    ix = np.flatnonzero(px > 0)
    iq = np.flatnonzero(q > 0)
    return px, q, ix, iq


def _reinsert(P_red, ix, iq, shape):
    P = np.zeros(shape)
    P[np.ix_(ix, iq)] = P_red
    return P


def _bisect_tilt(div, cap_nats, scale):
    """Find lam <= 0 with div(lam) = cap, or report saturation.

    ``div`` must be non-increasing in lam (non-decreasing in |lam|).
    Returns (lam, saturated).
    """
    lo = -1.0 / scale
    prev = -np.inf
    while True:
        d = div(lo)
        if d >= cap_nats:
            break
        if lo < -1e9 / scale or d - prev < 1e-13:
            return lo, True
        prev = d
        lo *= 2.0
    hi = 0.0
    best = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = div(mid)
        if d <= cap_nats:
            hi = mid
            best = mid
            if cap_nats - d <= _DIV_TOL:
                break
        else:
            lo = mid
        if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
            break
    return best, False


def min_d0_cc(px, q, d0, cap_nats: float) -> Stage1Result:
    """Minimize E[d0] over joints with marginals (px, q) and I(X;XH) <= cap.

    The minimizer is a tilted coupling; the tilt is bisected until the
    mutual information of the scaled joint meets the cap (when active).
    """
    if cap_nats < 0:
        raise ValueError("rate cap must be >= 0")
    d0 = as_array(d0)
    px_full, q_full, ix, iq = _strip_support(px, q)
    if d0.shape != (px_full.size, q_full.size):
        raise ValueError(f"d0 shape {d0.shape} does not match marginals")
    pxr, qr, d0r = px_full[ix], q_full[iq], d0[np.ix_(ix, iq)]
    ref = np.outer(pxr, qr)
    shape = (px_full.size, q_full.size)

    def finish(P_red, lam, active, capval):
        P = _reinsert(P_red, ix, iq, shape)
        return Stage1Result(
            d0_star=float(np.sum(P * d0)), minimizer=P,
            multipliers=(float(lam) if active else 0.0,),
            active_flags=(bool(active),), cap_values=(float(capval),))

    scale = float(d0r.max() - d0r.min())
    if cap_nats == 0.0 or scale == 0.0:
        return finish(ref, 0.0, False, 0.0)

    def div(lam):
        P = sinkhorn_tilt(pxr, qr, d0r, lam)
        return kl_divergence_nats(P, ref)

    lam, saturated = _bisect_tilt(div, cap_nats, scale)
    P = sinkhorn_tilt(pxr, qr, d0r, lam)
    capval = kl_divergence_nats(P, ref)
    return finish(P, lam, not saturated, capval)


def _iid_tilt(px, q, d0, lam):
    W = np.log(q)[None, :] + lam * d0
    lz = logsumexp(W, axis=1)
    return px[:, None] * np.exp(W - lz[:, None])


def min_d0_iid(px, q, d0, cap_nats: float) -> Stage1Result:
    """Minimize E[d0] over joints with source marginal px and
    D(P || px x q) <= cap.

    The minimizer is the row-normalized tilt of px x q; no column
    fitting is needed. When the cap exceeds the divergence of the
    cheapest-row coupling the cap is slack and that coupling is optimal.
    """
    if cap_nats < 0:
        raise ValueError("rate cap must be >= 0")
    d0 = as_array(d0)
    px_full, q_full, ix, iq = _strip_support(px, q)
    if d0.shape != (px_full.size, q_full.size):
        raise ValueError(f"d0 shape {d0.shape} does not match marginals")
    pxr, qr, d0r = px_full[ix], q_full[iq], d0[np.ix_(ix, iq)]
    ref = np.outer(pxr, qr)
    shape = (px_full.size, q_full.size)

    def finish(P_red, lam, active):
        P = _reinsert(P_red, ix, iq, shape)
        capval = kl_divergence_nats(P_red, ref)
        return Stage1Result(
            d0_star=float(np.sum(P * d0)), minimizer=P,
            multipliers=(float(lam) if active else 0.0,),
            active_flags=(bool(active),), cap_values=(float(capval),))

    # divergence of the limiting coupling that conditions each row on its
    # cheapest reconstruction symbols
    row_min = d0r.min(axis=1)
    sat_div = 0.0
    P_sat = np.zeros_like(ref)
    for i in range(pxr.size):
        sel = d0r[i] <= row_min[i] + 1e-15
        mass = qr[sel].sum()
        P_sat[i, sel] = pxr[i] * qr[sel] / mass
        sat_div -= pxr[i] * math.log(mass)
    if cap_nats == 0.0:
        return finish(ref, 0.0, False)
    if cap_nats >= sat_div - 1e-13:
        return finish(P_sat, 0.0, False)

    def div(lam):
        return kl_divergence_nats(_iid_tilt(pxr, qr, d0r, lam), ref)

    scale = float(d0r.max() - d0r.min())
    lam, saturated = _bisect_tilt(div, cap_nats, scale)
    if saturated:  # unreachable given the sat_div test, kept as a safety net
        return finish(P_sat, 0.0, False)
    return finish(_iid_tilt(pxr, qr, d0r, lam), lam, True)


# ---------------------------------------------------------------------------
# cone-program machinery (multi-cap and tie-set problems)
# ---------------------------------------------------------------------------

def _cap_aggregator(other_shape, axes):
    """0/1 matrix mapping the raveled non-X axes onto the raveled subset."""
    axes = tuple(axes)
    sub_shape = tuple(other_shape[a] for a in axes)
    nsub = int(np.prod(sub_shape))
    nall = int(np.prod(other_shape))
    A = np.zeros((nsub, nall))
    for flat in range(nall):
        idx = np.unravel_index(flat, other_shape)
        sub = tuple(idx[a] for a in axes)
        A[np.ravel_multi_index(sub, sub_shape), flat] = 1.0
    return A, sub_shape


class _ConeProblem:
    """Shared cone-program builder on the support of a constraint set."""

    def __init__(self, cs: ConstraintSet):
        import cvxpy as cp

        self.cp = cp
        self.cs = cs
        px = cs.x_marginal
        ref_other = cs.other_ref.ravel()
        self.ix = np.flatnonzero(px > 0)
        self.iq = np.flatnonzero(ref_other > 0)
        self.pxr = px[self.ix]
        self.qr = ref_other[self.iq]
        self.qr = self.qr / self.qr.sum()
        self.full_shape = (px.size, ref_other.size)
        self.P = cp.Variable((self.ix.size, self.iq.size), nonneg=True)
        cons = [cp.sum(self.P, axis=1) == self.pxr]
        if cs.pin_other:
            cons.append(cp.sum(self.P, axis=0) == self.qr)
        self.cap_cons = []
        for axes, cap in cs.caps:
            A, sub_shape = _cap_aggregator(cs.other_shape, axes)
            A = A[:, self.iq]
            keep = A.sum(axis=1) > 0
            A = A[keep]
            Psub = self.P @ A.T
            ref_sub = np.outer(self.pxr, A @ self.qr)
            if cap <= _CAP_EQ_TOL:
                c = Psub == ref_sub
            else:
                c = cp.sum(cp.rel_entr(Psub, ref_sub)) <= cap
            cons.append(c)
            self.cap_cons.append(c)
        self.base_cons = cons

    def embed_cost(self, cost_tensor):
        flat = np.asarray(cost_tensor, dtype=float).reshape(self.full_shape)
        return flat[np.ix_(self.ix, self.iq)]

    def solve_candidates(self, objective, extra_cons=()):
        """Candidate solutions from an escalating solver chain.

        Status labels are unreliable near degenerate faces, so every
        returned iterate is kept and judged by an explicit feasibility
        check on the caller's side. The chain stops early once an
        iterate is feasible to 1e-8.
        """
        cp = self.cp
        prob = cp.Problem(objective, self.base_cons + list(extra_cons))
        attempts = (
            ("CLARABEL", {"tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12, "tol_feas": 1e-12}),
            ("CLARABEL", {}),
            ("SCS", {"eps": 1e-9, "max_iters": 200_000}),
        )
        out = []
        for solver, opts in attempts:
            try:
                prob.solve(solver=solver, **opts)
            except cp.error.SolverError:
                continue
            if self.P.value is None:
                continue
            P = np.clip(self.P.value, 0.0, None)
            duals = [c.dual_value for c in self.cap_cons]
            out.append((P, duals))
            if self.feasibility_violation(P) <= 1e-8:
                break
        return out

    def expand(self, P_red):
        P = np.zeros(self.full_shape)
        P[np.ix_(self.ix, self.iq)] = P_red
        return P

    def feasibility_violation(self, P_red):
        """Worst constraint violation of a candidate point, in natural units."""
        viol = abs(P_red.sum(axis=1) - self.pxr).max()
        if self.cs.pin_other:
            viol = max(viol, abs(P_red.sum(axis=0) - self.qr).max())
        for (axes, cap) in self.cs.caps:
            A, _ = _cap_aggregator(self.cs.other_shape, axes)
            A = A[:, self.iq]
            A = A[A.sum(axis=1) > 0]
            sub = P_red @ A.T
            ref_sub = np.outer(self.pxr, A @ self.qr)
            viol = max(viol, kl_divergence_nats(sub, ref_sub) - cap)
        return viol


def min_d0_multi(constraints: ConstraintSet, d0, output_map=None) -> Stage1Result:
    """Minimize E[d0] (through the output map for three-axis joints)
    subject to the full constraint set, as an exponential-cone program.

    Dual variables of the divergence caps provide the multipliers.
    """
    cost = distortion_tensor(as_array(d0), constraints.shape, output_map)
    prob = _ConeProblem(constraints)
    cred = prob.embed_cost(cost)
    obj = prob.cp.Minimize(prob.cp.sum(prob.cp.multiply(prob.P, cred)))
    best = None
    best_duals = None
    best_viol = None
    for P_red, duals in prob.solve_candidates(obj):
        viol = prob.feasibility_violation(P_red)
        if viol > _FEAS_TOL:
            continue
        val = float(np.sum(P_red * cred))
        if best is None or val < float(np.sum(best * cred)):
            best, best_duals, best_viol = P_red, duals, viol
    if best is None:
        raise ConvergenceError("stage-1 cone solve produced no feasible solution")
    mults = []
    flags = []
    capvals = []
    for (axes, cap), dual in zip(constraints.caps, best_duals):
        A, _ = _cap_aggregator(constraints.other_shape, axes)
        A = A[:, prob.iq]
        A = A[A.sum(axis=1) > 0]
        val = kl_divergence_nats(best @ A.T, np.outer(prob.pxr, A @ prob.qr))
        capvals.append(float(val))
        flags.append(bool(val >= cap - 1e-7))
        if dual is None or np.size(dual) != 1:
            # equality-pinned zero caps carry a matrix dual; no scalar multiplier
            mults.append(0.0)
        else:
            mults.append(min(0.0, -float(np.ravel(dual)[0])))
    P = prob.expand(best).reshape(constraints.shape)
    return Stage1Result(
        d0_star=float(np.sum(P * cost)), minimizer=P,
        multipliers=tuple(mults),
        active_flags=tuple(flags), cap_values=tuple(capvals), residual=float(best_viol))


def max_d1_over_ties(constraints: ConstraintSet, d0, d1, d0_star: float,
                     eps_tie: float = 1e-9, output_map=None,
                     minimizer: np.ndarray | None = None) -> TieResult:
    """Extreme values of E[d1] over the numerical tie set.

    The tie set is {feasible P : E[d0] <= d0_star + slack}, with
    ``slack = eps_tie * max(1, |d0_star|)``. Both the maximum and the
    minimum are linear objectives over a convex set and are solved as
    cone programs. Solver output is only trusted after an explicit
    feasibility check; the stage-1 minimizer, when supplied, always
    contributes a candidate, which keeps the result correct when the
    tie set is a single point and the cone solves are ill-conditioned.

    Cone-solver feasibility noise can inflate the extremes by a few
    1e-6 when the argmin set is a single point on a curved cap
    boundary; extremes within that fuzz of the minimizer's value are
    therefore snapped to it, which is exact in the pointlike case and
    off by at most the fuzz for a degenerate sliver of a face.

    A wide (max - min) gap signals a non-singleton argmin set; it is
    reported, never raised.
    """
    if eps_tie < 0:
        raise ValueError("eps_tie must be >= 0")
    shape = constraints.shape
    cost0 = distortion_tensor(as_array(d0), shape, output_map)
    cost1 = distortion_tensor(as_array(d1), shape, output_map)
    scale = max(1.0, abs(d0_star))
    slack = eps_tie * scale
    # Solve over the exact argmin face unless a genuinely fat tie window
    # was requested: a small positive slack lets the optimizer trade an
    # O(eps) distortion increase for an O(sqrt(eps)) objective gain along
    # the curved cap boundary, which would make equivalent formulations
    # disagree at the 1e-6 level.
    solve_slack = slack if eps_tie > 1e-6 else 0.0
    prob = _ConeProblem(constraints)
    c0 = prob.embed_cost(cost0)
    c1 = prob.embed_cost(cost1)
    tie_con = (prob.cp.sum(prob.cp.multiply(prob.P, c0)) <= d0_star + solve_slack,)

    cands = []
    solver_ok = True
    d1_at_min = None
    if minimizer is not None:
        m = np.asarray(minimizer, float).reshape(shape)
        d1_at_min = float(np.sum(m * cost1))
        cands.append(d1_at_min)
    d0_tol = slack + _FEAS_TOL * scale
    for sense, pick in ((prob.cp.Maximize, max), (prob.cp.Minimize, min)):
        found = []
        for P_red, _ in prob.solve_candidates(
                sense(prob.cp.sum(prob.cp.multiply(prob.P, c1))), tie_con):
            viol = prob.feasibility_violation(P_red)
            tie_viol = float(np.sum(P_red * c0)) - d0_star
            if viol <= _FEAS_TOL and tie_viol <= d0_tol:
                found.append(float(np.sum(P_red * c1)))
        if found:
            cands.append(pick(found))
        else:
            solver_ok = False
    if not cands:
        raise ConvergenceError("tie-set solves failed and no stage-1 minimizer was supplied")
    d1_max = max(cands)
    d1_min = min(cands)
    if d1_at_min is not None:
        # an extreme within solver-feasibility fuzz of the minimizer's own
        # value signals a pointlike tie set; the minimizer value is exact
        # there, while the cone solve carries an O(sqrt(feastol)) bias
        snap = 1e-5 * max(1.0, abs(d1_at_min))
        if d1_max - d1_at_min <= snap:
            d1_max = d1_at_min
        if d1_at_min - d1_min <= snap:
            d1_min = d1_at_min
        d1_max = max(d1_max, d1_at_min)
        d1_min = min(d1_min, d1_at_min)
    return TieResult(d1_max=d1_max, d1_min=d1_min,
                     d1_at_minimizer=d1_at_min, solver_ok=solver_ok)
