"""Finite-blocklength random-codebook simulator.

Draws codebooks for the four discrete ensembles (plus continuous
independent-entry codebooks), performs minimum-d0 encoding under three
tie-breaking rules, and aggregates the true distortion into summary
statistics.

Two execution paths:

* literal: the codebook is materialized and scanned. Bounded by a cell
  budget, since the number of codewords grows as 2^(n*R).
* types: for the cc and iid ensembles over small discrete alphabets the
  encoder's choice only depends on the joint empirical distribution of
  (source word, codeword), so the codebook is replaced by occupancy
  counts per joint type. Counts follow an exact multinomial for modest
  codebook sizes and independent Poisson approximations (exact in the
  rare-type regime) once the codebook is astronomically large. This
  makes blocklengths like n = 400 at rate 1/2 simulable.

All randomness is derived from a single seed through counter-based
per-trial streams, so runs are reproducible under any trial ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import gammaln, logsumexp

from ._util import derive_rng, map_maybe_parallel
from .core import as_array
from .ensembles import EnsembleSpec
from .errors import BudgetError

__all__ = [
    "SimConfig",
    "SimStats",
    "TypeCoverageReport",
    "round_type",
    "codebook_size",
    "draw_codebook",
    "encode",
    "run_trials",
    "run_trials_continuous",
    "check_type_coverage",
]

# purposes for per-trial stream derivation
_PURPOSE_SOURCE = 0
_PURPOSE_CODEBOOK = 1
_PURPOSE_TIE = 2
_PURPOSE_OCCUPANCY = 3

_TIE_RULES = ("pessimistic", "uniform", "first_index")
_EXACT_MULTINOMIAL_MAX = 1_000_000
_HUGE_LOG = math.log(1e12)
_TINY_LOG = math.log(1e-15)


@dataclass(frozen=True)
class SimConfig:
    """Run parameters for the simulator.

    ``rate_bits`` is the total rate; superposition and expurgated
    ensembles read their split from the spec's ``rate_split``. ``delta``
    serves the expurgation threshold (sup-norm probability units) and
    the type-coverage slack (bits).
    """

    n: int
    rate_bits: float
    trials: int
    seed: int
    tie_rule: str = "pessimistic"
    delta: float = 0.05
    fresh_codebook: bool = True
    method: str = "auto"  # auto | literal | types
    max_cells: float = 2e7
    max_types: float = 2e6

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.tie_rule not in _TIE_RULES:
            raise ValueError(f"tie_rule must be one of {_TIE_RULES}")
        if self.method not in ("auto", "literal", "types"):
            raise ValueError("method must be auto, literal or types")
        if self.rate_bits < 0:
            raise ValueError("rate must be >= 0")


@dataclass(frozen=True)
class SimStats:
    """Aggregated per-symbol statistics over all trials."""

    mean_d1: float
    mean_d0: float
    d1_quantiles: tuple  # (5%, 50%, 95%)
    exceedance: float    # empirical P[d1/n >= d1_target + delta]
    mean_tie_count: float
    type_coverage: float | None = None
    effective_rate: float | None = None
    ensemble: str = ""
    tie_rule: str = "pessimistic"
    n: int = 0
    trials: int = 0
    seed: int = 0
    method: str = "literal"
    d1_target: float = float("nan")
    delta: float = float("nan")

    def __post_init__(self):
        q5, q50, q95 = self.d1_quantiles
        if not (q5 <= q50 + 1e-12 and q50 <= q95 + 1e-12):
            raise ValueError("quantiles must be ordered")
        if not (0.0 <= self.exceedance <= 1.0):
            raise ValueError("exceedance must be a probability")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["d1_quantiles"] = list(self.d1_quantiles)
        return d


# ---------------------------------------------------------------------------
# compositions and codebook drawing
# ---------------------------------------------------------------------------

def round_type(q, n: int) -> np.ndarray:
    """Integer composition of n closest to n*q: largest-remainder rounding
    with ties broken by symbol order, adjusted so every supported symbol
    keeps at least one slot.

    The result stays within 1/n of q in sup norm; if no such composition
    exists the error names the smallest blocklength that works.
    """
    q = np.ravel(as_array(q))
    counts = _round_type_or_none(q, n)
    if counts is None:
        m = n + 1
        while _round_type_or_none(q, m) is None and m < 100 * q.size + n:
            m += 1
        raise ValueError(f"no composition at blocklength {n} stays within 1/n of the "
                         f"target with full support; smallest valid n is {m}")
    return counts


def _round_type_or_none(q, n):
    """Bounded apportionment: counts in [max(1, ceil(n*q - 1)), floor(n*q + 1)]
    for supported symbols, largest remainders served first."""
    support = q > 0
    if support.sum() > n:
        return None
    scaled = n * q
    lo = np.where(support, np.maximum(1, np.ceil(scaled - 1 - 1e-12)).astype(int), 0)
    hi = np.where(support, np.floor(scaled + 1 + 1e-12).astype(int), 0)
    if lo.sum() > n or hi.sum() < n:
        return None
    base = lo.copy()
    short = n - base.sum()
    rem = scaled - base
    order = np.lexsort((np.arange(q.size), -rem))
    while short > 0:
        progressed = False
        for idx in order:
            if short == 0:
                break
            if base[idx] < hi[idx]:
                base[idx] += 1
                short -= 1
                progressed = True
        if not progressed:
            return None
    if np.abs(base / n - q).max() > 1.0 / n + 1e-12:
        return None
    return base


def codebook_size(rate_bits: float, n: int):
    """max(1, floor(2^(n*rate))) as an exact int, or None when the count
    is far too large to materialize."""
    v = n * rate_bits
    if v > 50:
        return None
    return max(1, int(math.floor(2.0 ** v + 1e-12)))


def _log_codebook_size(rate_bits: float, n: int) -> float:
    M = codebook_size(rate_bits, n)
    return math.log(M) if M is not None else n * rate_bits * math.log(2.0)


def _permuted_rows(base: np.ndarray, m: int, rng) -> np.ndarray:
    """m independent uniform shuffles of a fixed row."""
    keys = rng.random((m, base.size))
    return base[np.argsort(keys, axis=1)]


def draw_codebook(spec: EnsembleSpec, n: int, rate_bits, rng, delta: float = 0.05,
                  max_cells: float = 2e7):
    """Materialize one codebook. Returns (words, info).

    ``words`` is an (M, n) integer array of reconstruction words; ``info``
    carries ensemble-specific extras (component books, kept pair count).
    ``rate_bits`` is the total rate for cc/iid and a (r_a, r_b) split for
    the two-layer ensembles. Guarded by the cell budget.
    """
    rng = rng if isinstance(rng, np.random.Generator) else derive_rng(int(rng), _PURPOSE_CODEBOOK, 0)
    if spec.kind in ("cc", "iid"):
        M = codebook_size(float(rate_bits), n)
        if M is None or M * n > max_cells:
            raise BudgetError(f"codebook of 2^({n}*{rate_bits}) words exceeds the cell budget")
        if spec.kind == "iid":
            words = rng.choice(spec.q.size, size=(M, n), p=spec.q)
            return words, {"M": M}
        counts = round_type(spec.q, n)
        base = np.repeat(np.arange(counts.size), counts)
        return _permuted_rows(base, M, rng), {"M": M, "composition": counts}

    if spec.kind == "superposition":
        r0, r1 = spec.rate_split
        M0 = codebook_size(float(r0), n)
        M1 = codebook_size(float(r1), n)
        if M0 is None or M1 is None or M0 * M1 * n > max_cells:
            raise BudgetError("superposition codebook exceeds the cell budget")
        joint_counts = _round_joint_type(spec.q_uxhat, n)
        u_counts = joint_counts.sum(axis=1)
        u_base = np.repeat(np.arange(u_counts.size), u_counts)
        centers = _permuted_rows(u_base, M0, rng)
        nu, nh = joint_counts.shape
        words = np.empty((M0 * M1, n), dtype=int)
        for i in range(M0):
            block = np.empty((M1, n), dtype=int)
            for u in range(nu):
                pos = np.flatnonzero(centers[i] == u)
                if pos.size == 0:
                    continue
                sat_base = np.repeat(np.arange(nh), joint_counts[u])
                block[:, pos] = _permuted_rows(sat_base, M1, rng)
            words[i * M1:(i + 1) * M1] = block
        return words, {"M0": M0, "M1": M1, "centers": centers,
                       "joint_composition": joint_counts}

    # expurgated parallel coding
    r1, r2 = spec.rate_split
    M1 = codebook_size(float(r1), n)
    M2 = codebook_size(float(r2), n)
    if M1 is None or M2 is None or M1 * M2 * n > max_cells:
        raise BudgetError("expurgated codebook exceeds the cell budget")
    b1 = _permuted_rows(np.repeat(np.arange(spec.q1.size), round_type(spec.q1, n)), M1, rng)
    b2 = _permuted_rows(np.repeat(np.arange(spec.q2.size), round_type(spec.q2, n)), M2, rng)
    ref = np.outer(spec.q1, spec.q2)
    keep = np.ones((M1, M2), dtype=bool)
    for a in range(spec.q1.size):
        A = (b1 == a).astype(float)
        for b in range(spec.q2.size):
            B = (b2 == b).astype(float)
            emp = (A @ B.T) / n
            keep &= np.abs(emp - ref[a, b]) <= delta + 1e-12
    ii, jj = np.nonzero(keep)
    words = spec.psi[b1[ii], b2[jj]] if ii.size else np.empty((0, n), dtype=int)
    return words, {"M1": M1, "M2": M2, "book1": b1, "book2": b2,
                   "kept_pairs": np.stack([ii, jj], axis=1) if ii.size else np.empty((0, 2), dtype=int),
                   "n_kept": int(ii.size)}


def _round_joint_type(q_joint, n):
    """Largest-remainder rounding of a joint pmf to counts summing to n."""
    q = as_array(q_joint)
    flat = _round_type_or_none(q.ravel(), n)
    if flat is None:
        m = n + 1
        while _round_type_or_none(q.ravel(), m) is None and m < 100 * q.size + n:
            m += 1
        raise ValueError(f"no joint composition at blocklength {n}; smallest valid n is {m}")
    return flat.reshape(q.shape)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def _word_distortions(x, words, d, chunk_cells: int = 4_000_000):
    """Total distortion of every codeword against x (chunked)."""
    M, n = words.shape
    out = np.empty(M)
    rows = max(1, int(chunk_cells // max(n, 1)))
    for start in range(0, M, rows):
        blk = words[start:start + rows]
        out[start:start + rows] = d[x[None, :], blk].sum(axis=1)
    return out


def encode(x, words, d0, tie_rule: str, rng=None, d1=None):
    """Minimum-d0 index for a source word against a materialized codebook.

    Returns (index, d0_per_symbol, tie_count). Ties within a relative
    1e-9 window of the minimum are resolved by rule: pessimistic takes
    the tied codeword with the largest total d1 (requires d1), uniform
    draws from the tied set, first_index keeps the smallest index.
    """
    if tie_rule not in _TIE_RULES:
        raise ValueError(f"tie_rule must be one of {_TIE_RULES}")
    x = np.asarray(x)
    words = np.asarray(words)
    d0 = as_array(d0)
    n = x.size
    totals = _word_distortions(x, words, d0)
    dmin = totals.min()
    tied = np.flatnonzero(totals <= dmin + 1e-9 * max(1.0, abs(dmin)))
    if tie_rule == "first_index" or tied.size == 1:
        pick = int(tied[0])
    elif tie_rule == "uniform":
        if rng is None:
            raise ValueError("uniform tie-breaking needs an rng")
        pick = int(tied[rng.integers(tied.size)])
    else:
        if d1 is None:
            raise ValueError("pessimistic tie-breaking needs the true metric d1")
        d1tot = _word_distortions(x, words[tied], as_array(d1))
        pick = int(tied[int(np.argmax(d1tot))])
    return pick, float(totals[pick] / n), int(tied.size)


# ---------------------------------------------------------------------------
# type-occupancy path (cc and iid, discrete alphabets)
# ---------------------------------------------------------------------------

def _compositions(total: int, parts: int) -> np.ndarray:
    """All compositions of ``total`` into ``parts`` non-negative slots."""
    if parts == 1:
        return np.array([[total]], dtype=int)
    out = []
    for first in range(total + 1):
        rest = _compositions(total - first, parts - 1)
        out.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=int), rest]))
    return np.vstack(out)


def _log_multinomial(n, counts):
    return gammaln(n + 1) - gammaln(np.asarray(counts) + 1).sum(axis=-1)


class _TypeTable:
    """Joint types of (x, codeword) consistent with a given source word.

    Rows are indexed per occupied source symbol; every joint type is one
    composition choice per row. Probabilities refer to a single random
    codeword (uniform over the rounded type class for cc, entrywise q
    for iid).
    """

    def __init__(self, x_counts, q, kind, n, max_types, composition=None):
        from math import comb

        self.n = n
        occ = np.flatnonzero(x_counts > 0)
        H = q.size
        total = 1.0
        for v in occ:
            total *= comb(int(x_counts[v]) + H - 1, H - 1)
        if total > max_types:
            raise BudgetError(f"{total:g} joint types exceed the enumeration budget "
                              f"{max_types:g}")
        per_row = [(_compositions(int(x_counts[v]), H)) for v in occ]
        sizes = [c.shape[0] for c in per_row]
        idx = np.indices(sizes).reshape(len(sizes), -1)
        # counts tensor: (#types, #rows, H)
        K = np.stack([per_row[r][idx[r]] for r in range(len(occ))], axis=1)
        if kind == "cc":
            col = K.sum(axis=1)
            mask = np.all(col == composition[None, :], axis=1)
            K = K[mask]
            logp = sum(_log_multinomial(x_counts[v], K[:, r, :]) for r, v in enumerate(occ))
            logp = logp - _log_multinomial(n, composition)
        else:
            logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), -np.inf)
            logp = np.zeros(K.shape[0])
            for r, v in enumerate(occ):
                logp += _log_multinomial(x_counts[v], K[:, r, :])
                logp += K[:, r, :] @ logq
        self.rows = occ
        self.K = K
        self.logp = logp

    def totals(self, d):
        d = as_array(d)
        return np.einsum("trh,rh->t", self.K, d[self.rows, :])


def _sample_occupancy_log(rng, log_lam):
    """Occupied mask and log-counts for independent Poisson occupancies."""
    occupied = np.zeros(log_lam.shape, dtype=bool)
    logw = np.full(log_lam.shape, -np.inf)
    huge = log_lam > _HUGE_LOG
    occupied[huge] = True
    logw[huge] = log_lam[huge]
    mid = (~huge) & (log_lam > _TINY_LOG)
    if mid.any():
        counts = rng.poisson(np.exp(log_lam[mid]))
        occupied[mid] = counts > 0
        with np.errstate(divide="ignore"):
            logw[mid] = np.where(counts > 0, np.log(np.maximum(counts, 1)), -np.inf)
    return occupied, logw


def _occupancy(rng, logp, log_m):
    """Codeword counts per joint type for a codebook of exp(log_m) words."""
    if log_m <= math.log(_EXACT_MULTINOMIAL_MAX):
        m = int(round(math.exp(log_m)))
        p = np.exp(logp - logsumexp(logp))
        p = p / p.sum()
        counts = rng.multinomial(m, p)
        occupied = counts > 0
        with np.errstate(divide="ignore"):
            logw = np.where(occupied, np.log(np.maximum(counts, 1)), -np.inf)
        return occupied, logw
    return _sample_occupancy_log(rng, log_m + logp)


def _type_trial(rng_source, rng_occ, rng_tie, px, spec, config, d0, d1):
    n = config.n
    x_counts = rng_source.multinomial(n, px)
    q = spec.q
    composition = round_type(q, n) if spec.kind == "cc" else None
    table = _TypeTable(x_counts, q, spec.kind, n, config.max_types, composition)
    log_m = _log_codebook_size(config.rate_bits, n)
    occupied, logw = _occupancy(rng_occ, table.logp, log_m)
    if not occupied.any():
        # a codebook always realizes some type; force the modal one
        k = int(np.argmax(table.logp))
        occupied[k] = True
        logw[k] = 0.0
    tot0 = table.totals(d0)
    tot1 = table.totals(d1)
    idx = np.flatnonzero(occupied)
    dmin = tot0[idx].min()
    tied = idx[tot0[idx] <= dmin + 1e-9 * max(1.0, abs(dmin))]
    if config.tie_rule == "pessimistic":
        pick = int(tied[int(np.argmax(tot1[tied]))])
    else:
        # codewords are exchangeable, so the first tied index is a
        # weight-proportional draw across tied types
        w = np.exp(logw[tied] - logw[tied].max())
        pick = int(tied[rng_tie.choice(tied.size, p=w / w.sum())])
    tie_count = float(math.exp(min(logsumexp(logw[tied]), 700.0)))
    return tot0[pick] / n, tot1[pick] / n, tie_count


# ---------------------------------------------------------------------------
# trial runners
# ---------------------------------------------------------------------------

def _literal_trial(trial, px, spec, config, d0, d1, fixed_words, fixed_info):
    rng_source = derive_rng(config.seed, _PURPOSE_SOURCE, trial)
    rng_tie = derive_rng(config.seed, _PURPOSE_TIE, trial)
    n = config.n
    x = rng_source.choice(px.size, size=n, p=px)
    if fixed_words is not None:
        words, info = fixed_words, fixed_info
    else:
        rng_cb = derive_rng(config.seed, _PURPOSE_CODEBOOK, trial)
        words, info = draw_codebook(spec, n, _rates_for(spec, config), rng_cb,
                                    delta=config.delta, max_cells=config.max_cells)
    if words.shape[0] == 0:
        raise RuntimeError("expurgation removed every codeword; increase delta")
    pick, d0ps, ties = encode(x, words, d0, config.tie_rule, rng_tie, d1)
    d1ps = float(as_array(d1)[x, words[pick]].sum() / n)
    eff = None
    if spec.kind == "expurgated":
        eff = math.log2(max(info["n_kept"], 1)) / n
    return d0ps, d1ps, float(ties), eff


def _rates_for(spec, config):
    if spec.kind in ("superposition", "expurgated"):
        if spec.rate_split is not None:
            return spec.rate_split
        return (config.rate_bits / 2, config.rate_bits / 2)
    return config.rate_bits


def run_trials(source, spec: EnsembleSpec, config: SimConfig, d0, d1,
               d1_target: float) -> SimStats:
    """Simulate independent source words against (by default fresh)
    random codebooks and aggregate the per-symbol distortions.

    Dispatches to the literal codebook when it fits the cell budget and
    to the type-occupancy path otherwise (cc/iid only).
    """
    px = np.ravel(as_array(source))
    d0 = as_array(d0)
    d1 = as_array(d1)
    total_rate = (sum(spec.rate_split) if spec.kind in ("superposition", "expurgated")
                  and spec.rate_split else config.rate_bits)
    M = codebook_size(total_rate, config.n)
    fits = M is not None and M * config.n <= config.max_cells
    if config.method == "literal" and not fits:
        raise BudgetError("literal codebook exceeds the cell budget; use method='types'")
    method = "literal" if (config.method == "literal" or (config.method == "auto" and fits)) \
        else "types"
    if method == "types" and spec.kind not in ("cc", "iid"):
        raise BudgetError(f"the type-occupancy path does not cover the {spec.kind} "
                          f"ensemble; reduce n or the rate")

    if method == "literal":
        fixed_words = fixed_info = None
        if not config.fresh_codebook:
            rng_cb = derive_rng(config.seed, _PURPOSE_CODEBOOK, 0)
            fixed_words, fixed_info = draw_codebook(
                spec, config.n, _rates_for(spec, config), rng_cb,
                delta=config.delta, max_cells=config.max_cells)

        def one(trial):
            return _literal_trial(trial, px, spec, config, d0, d1,
                                  fixed_words, fixed_info)
    else:
        def one(trial):
            rng_source = derive_rng(config.seed, _PURPOSE_SOURCE, trial)
            rng_occ = derive_rng(config.seed, _PURPOSE_OCCUPANCY, trial)
            rng_tie = derive_rng(config.seed, _PURPOSE_TIE, trial)
            a, b, c = _type_trial(rng_source, rng_occ, rng_tie, px, spec, config, d0, d1)
            return a, b, c, None

    rows = map_maybe_parallel(one, range(config.trials))
    return _aggregate(rows, spec, config, d1_target, method)


def run_trials_continuous(model, config: SimConfig, d1_target: float) -> SimStats:
    """Literal simulation for continuous models under the
    independent-entry ensemble (codewords drawn from the model's
    auxiliary sampler, distortions evaluated pointwise)."""
    M = codebook_size(config.rate_bits, config.n)
    if M is None or M * config.n > config.max_cells:
        raise BudgetError("continuous simulation requires a codebook within the cell budget")

    def one(trial):
        rng_source = derive_rng(config.seed, _PURPOSE_SOURCE, trial)
        rng_cb = derive_rng(config.seed, _PURPOSE_CODEBOOK, trial)
        rng_tie = derive_rng(config.seed, _PURPOSE_TIE, trial)
        n = config.n
        x = model.source_sampler(rng_source, n)
        words = model.q_sampler(rng_cb, M * n).reshape(M, n)
        tot0 = model.d0_eval(x[None, :], words).sum(axis=1)
        tot1 = model.d1_eval(x[None, :], words).sum(axis=1)
        dmin = tot0.min()
        tied = np.flatnonzero(tot0 <= dmin + 1e-9 * max(1.0, abs(dmin)))
        if config.tie_rule == "pessimistic":
            pick = int(tied[int(np.argmax(tot1[tied]))])
        elif config.tie_rule == "uniform":
            pick = int(tied[rng_tie.integers(tied.size)])
        else:
            pick = int(tied[0])
        return tot0[pick] / n, tot1[pick] / n, float(tied.size), None

    rows = map_maybe_parallel(one, range(config.trials))
    spec_tag = EnsembleSpec("iid", q=[1.0])
    stats = _aggregate(rows, spec_tag, config, d1_target, "literal")
    return _replace_ensemble(stats, f"iid-continuous:{model.name}")


def _replace_ensemble(stats: SimStats, tag: str) -> SimStats:
    d = stats.to_dict()
    d["ensemble"] = tag
    d["d1_quantiles"] = tuple(d["d1_quantiles"])
    return SimStats(**d)


def _aggregate(rows, spec, config, d1_target, method) -> SimStats:
    d0s = np.array([r[0] for r in rows])
    d1s = np.array([r[1] for r in rows])
    ties = np.array([r[2] for r in rows])
    effs = [r[3] for r in rows if r[3] is not None]
    q5, q50, q95 = np.percentile(d1s, [5.0, 50.0, 95.0])
    return SimStats(
        mean_d1=float(d1s.mean()),
        mean_d0=float(d0s.mean()),
        d1_quantiles=(float(q5), float(q50), float(q95)),
        exceedance=float(np.mean(d1s >= d1_target + config.delta)),
        mean_tie_count=float(ties.mean()),
        type_coverage=None,
        effective_rate=float(np.mean(effs)) if effs else None,
        ensemble=spec.kind,
        tie_rule=config.tie_rule,
        n=config.n,
        trials=config.trials,
        seed=config.seed,
        method=method,
        d1_target=float(d1_target),
        delta=config.delta,
    )


# ---------------------------------------------------------------------------
# joint-type coverage checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeCoverageReport:
    """Per-trial occurrence statistics for margin-consistent joint types."""

    clean_trial_fraction: float   # trials with no over-the-cap induced type
    mean_coverage: float          # realized fraction of the under-the-cap set
    violations_per_trial: tuple
    coverage_per_trial: tuple
    n: int
    rate_bits: float
    delta_bits: float
    trials: int
    seed: int


def _type_mi_bits(K: np.ndarray, n: int) -> np.ndarray:
    """Mutual information (bits) of joint count tables, vectorized."""
    P = K / n
    px = P.sum(axis=2)
    qh = P.sum(axis=1)
    ref = px[:, :, None] * qh[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log2(np.where(P > 0, P, 1.0))
                                     - np.log2(np.where(ref > 0, ref, 1.0))), 0.0)
    return terms.sum(axis=(1, 2))


def check_type_coverage(source, spec: EnsembleSpec, config: SimConfig, d0) -> TypeCoverageReport:
    """Empirical joint-type occurrence for the composition-constrained
    ensemble.

    Per trial: draw a source word and a codebook, collect the joint type
    each codeword induces against the source word, then report (a) how
    many induced types exceed the information cap rate + delta and (b)
    the realized fraction of margin-consistent types at or below
    rate - delta. ``delta`` is read in bits here.
    """
    if spec.kind != "cc":
        raise ValueError("type-coverage checks apply to the composition-constrained ensemble")
    px = np.ravel(as_array(source))
    n = config.n
    composition = round_type(spec.q, n)
    H = spec.q.size

    # integer keys for count tables: inner product with (n+1)-ary strides
    strides = (n + 1) ** np.arange(px.size * H, dtype=np.int64)

    def one(trial):
        rng_source = derive_rng(config.seed, _PURPOSE_SOURCE, trial)
        rng_cb = derive_rng(config.seed, _PURPOSE_CODEBOOK, trial)
        x = rng_source.choice(px.size, size=n, p=px)
        x_counts = np.bincount(x, minlength=px.size)
        table = _TypeTable(x_counts, spec.q, "cc", n, config.max_types, composition)
        K_all = np.zeros((table.K.shape[0], px.size, H), dtype=np.int64)
        K_all[:, table.rows, :] = table.K
        mi = _type_mi_bits(K_all, n)
        words, _ = draw_codebook(spec, n, config.rate_bits, rng_cb,
                                 delta=config.delta, max_cells=config.max_cells)
        # induced joint counts per codeword
        induced = np.zeros((words.shape[0], px.size, H), dtype=np.int64)
        for v in range(px.size):
            sel = x == v
            if not sel.any():
                continue
            for h in range(H):
                induced[:, v, h] = (words[:, sel] == h).sum(axis=1)
        realized = np.unique(induced.reshape(-1, px.size * H) @ strides)
        mi_realized = mi[np.isin(K_all.reshape(-1, px.size * H) @ strides, realized)]
        violations = int(np.sum(mi_realized > config.rate_bits + config.delta))
        sub_keys = K_all.reshape(-1, px.size * H)[mi <= config.rate_bits - config.delta] @ strides
        if sub_keys.size:
            coverage = float(np.isin(sub_keys, realized).mean())
        else:
            coverage = 1.0
        return violations, coverage

    rows = map_maybe_parallel(one, range(config.trials))
    violations = tuple(int(r[0]) for r in rows)
    coverage = tuple(float(r[1]) for r in rows)
    return TypeCoverageReport(
        clean_trial_fraction=float(np.mean([v == 0 for v in violations])),
        mean_coverage=float(np.mean(coverage)),
        violations_per_trial=violations,
        coverage_per_trial=coverage,
        n=n,
        rate_bits=config.rate_bits,
        delta_bits=config.delta,
        trials=config.trials,
        seed=config.seed,
    )
