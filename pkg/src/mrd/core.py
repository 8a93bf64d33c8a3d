"""Finite-alphabet probability and information-measure primitives.

All divergence computations run internally in nats; entropies and mutual
information are exposed in bits because that is the unit used throughout
the worked examples. Conversion happens only at function boundaries.

Conventions applied entrywise: 0*log(0) = 0, and p*log(p/0) = +inf. An
infinite divergence is returned as ``math.inf`` rather than raised, so
constraint checks can treat it as plain infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LN2 = float(np.log(2.0))

_SUM_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def as_array(x) -> np.ndarray:
    """Accept a Pmf/JointPmf/DistortionMatrix or a plain array-like."""
    if isinstance(x, (Pmf, JointPmf)):
        return x.probs
    if isinstance(x, DistortionMatrix):
        return x.values
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Pmf:
    """Probability vector over a finite alphabet.

    Weights must be non-negative and sum to one within 1e-12.
    """

    probs: np.ndarray

    def __post_init__(self):
        a = _freeze(np.ravel(as_array(self.probs)))
        if a.size < 1:
            raise ValueError("pmf needs at least one symbol")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("pmf weights must be finite and non-negative")
        if abs(a.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"pmf weights sum to {a.sum()!r}, expected 1 within {_SUM_TOL}")
        object.__setattr__(self, "probs", a)

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def tolist(self) -> list:
        return self.probs.tolist()

    @classmethod
    def uniform(cls, k: int) -> "Pmf":
        return cls(np.full(k, 1.0 / k))


@dataclass(frozen=True)
class JointPmf:
    """Dense joint distribution over two or three finite axes.

    Axis labels follow the problem at hand, e.g. (X, XH), (X, U, XH) or
    (X, XH1, XH2). Marginals are exact sums over axes.
    """

    probs: np.ndarray
    axis_names: tuple = ()

    def __post_init__(self):
        a = _freeze(as_array(self.probs))
        if a.ndim not in (2, 3):
            raise ValueError("joint pmf must have 2 or 3 axes")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("joint pmf entries must be finite and non-negative")
        if abs(a.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"joint pmf sums to {a.sum()!r}, expected 1 within {_SUM_TOL}")
        names = tuple(self.axis_names) or tuple(f"axis{i}" for i in range(a.ndim))
        if len(names) != a.ndim:
            raise ValueError("axis_names length must match number of axes")
        object.__setattr__(self, "probs", a)
        object.__setattr__(self, "axis_names", names)

    def marginal(self, axes: Iterable[int]) -> np.ndarray:
        """Exact marginal over the requested (kept) axes, in axis order."""
        keep = tuple(sorted(set(int(i) for i in axes)))
        if not keep or any(i < 0 or i >= self.probs.ndim for i in keep):
            raise ValueError(f"invalid axes {axes!r} for a {self.probs.ndim}-axis joint")
        drop = tuple(i for i in range(self.probs.ndim) if i not in keep)
        return self.probs.sum(axis=drop) if drop else np.array(self.probs)

    def tolist(self) -> list:
        return self.probs.tolist()


@dataclass(frozen=True)
class DistortionMatrix:
    """Non-negative per-symbol distortion values indexed by (x, xhat)."""

    values: np.ndarray

    def __post_init__(self):
        a = _freeze(as_array(self.values))
        if a.ndim != 2:
            raise ValueError("distortion matrix must be 2-D")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("distortion values must be finite and non-negative")
        object.__setattr__(self, "values", a)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def tolist(self) -> list:
        return self.values.tolist()


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def entropy_nats(p) -> float:
    p = as_array(p)
    return float(-_plogp(np.ravel(p)).sum())


def binary_entropy(a: float) -> float:
    """Entropy of (a, 1-a) in bits, with 0*log(0) = 0."""
    if not (0.0 <= a <= 1.0):
        raise ValueError(f"binary_entropy needs a in [0, 1], got {a!r}")
    return entropy_nats([a, 1.0 - a]) / LN2


def ternary_entropy(a: float, b: float) -> float:
    """Entropy of (a, b, 1-a-b) in bits."""
    if a < 0 or b < 0 or a + b > 1.0 + 1e-12:
        raise ValueError(f"ternary_entropy needs a, b >= 0 and a+b <= 1, got {(a, b)!r}")
    c = max(0.0, 1.0 - a - b)
    return entropy_nats([a, b, c]) / LN2


def kl_divergence_nats(p, ref) -> float:
    """D(p || ref) in nats; +inf on support violation, never an exception."""
    p = np.ravel(as_array(p))
    ref = np.ravel(as_array(ref))
    pos = p > 0
    if np.any(ref[pos] <= 0):
        return float(np.inf)
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(ref[pos]))))


def kl_to_product(joint, px, q, units: str = "nats") -> float:
    """Divergence of a two-axis joint from the product px x q.

    Equals the mutual information of the joint whenever its marginals
    match (px, q). Support violations give +inf.
    """
    j = as_array(joint)
    if j.ndim != 2:
        raise ValueError("kl_to_product expects a 2-axis joint")
    ref = np.outer(np.ravel(as_array(px)), np.ravel(as_array(q)))
    val = kl_divergence_nats(j, ref)
    return _in_units(val, units)


def _in_units(nats: float, units: str) -> float:
    if units == "nats":
        return nats
    if units == "bits":
        return nats / LN2
    raise ValueError(f"units must be 'nats' or 'bits', got {units!r}")


def mutual_info(joint, left: Sequence[int] = (0,), right: Sequence[int] | None = None,
                units: str = "bits") -> float:
    """Mutual information between two groups of axes of a joint pmf.

    ``left`` and ``right`` are disjoint tuples of axis indices; axes in
    neither group are marginalized out first. Defaults pair axis 0
    against all remaining axes.
    """
    j = as_array(joint)
    if j.ndim not in (2, 3):
        raise ValueError("mutual_info expects a 2- or 3-axis joint")
    left = tuple(int(i) for i in left)
    if right is None:
        right = tuple(i for i in range(j.ndim) if i not in left)
    right = tuple(int(i) for i in right)
    if not left or not right or set(left) & set(right):
        raise ValueError(f"invalid axis grouping left={left!r} right={right!r}")
    if any(i < 0 or i >= j.ndim for i in left + right):
        raise ValueError(f"axis out of range for {j.ndim}-axis joint")
    keep = tuple(sorted(set(left) | set(right)))
    drop = tuple(i for i in range(j.ndim) if i not in keep)
    sub = j.sum(axis=drop) if drop else j
    # positions of the groups inside the reduced tensor
    lpos = tuple(keep.index(i) for i in left)
    rpos = tuple(keep.index(i) for i in right)
    pl = sub.sum(axis=rpos)
    pr = sub.sum(axis=lpos)
    # reshape marginal product to the reduced tensor layout
    shape_l = [sub.shape[d] if d in lpos else 1 for d in range(sub.ndim)]
    shape_r = [sub.shape[d] if d in rpos else 1 for d in range(sub.ndim)]
    ref = pl.reshape(shape_l) * pr.reshape(shape_r)
    return _in_units(kl_divergence_nats(sub, ref), units)


def expected_distortion(joint, d, output_map: np.ndarray | None = None) -> float:
    """Average distortion of a joint pmf under a per-symbol metric.

    For 2-axis joints, ``d[x, xhat]`` is paired with axes (0, 1). For
    3-axis joints the metric is applied through ``output_map`` when
    given (a lookup table over the last two axes) and to the last axis
    otherwise.
    """
    j = as_array(joint)
    dm = as_array(d)
    if dm.ndim != 2:
        raise ValueError("distortion must be a 2-D matrix")
    if j.ndim == 2:
        if j.shape != dm.shape:
            raise ValueError(f"shape mismatch: joint {j.shape} vs distortion {dm.shape}")
        return float(np.sum(j * dm))
    if j.ndim != 3:
        raise ValueError("expected_distortion needs a 2- or 3-axis joint")
    cost = distortion_tensor(dm, j.shape, output_map)
    return float(np.sum(j * cost))


def distortion_tensor(d: np.ndarray, shape: tuple, output_map: np.ndarray | None) -> np.ndarray:
    """Expand d[x, xhat] to a cost tensor over a (2- or 3-axis) joint shape."""
    d = as_array(d)
    if len(shape) == 2:
        if d.shape != tuple(shape):
            raise ValueError(f"shape mismatch: joint {shape} vs distortion {d.shape}")
        return d
    nx, n1, n2 = shape
    if d.shape[0] != nx:
        raise ValueError(f"distortion has {d.shape[0]} source symbols, joint has {nx}")
    if output_map is None:
        if d.shape[1] != n2:
            raise ValueError(f"distortion has {d.shape[1]} output symbols, last axis has {n2}")
        return np.broadcast_to(d[:, None, :], shape)
    psi = np.asarray(output_map, dtype=int)
    if psi.shape != (n1, n2):
        raise ValueError(f"output map shape {psi.shape} does not match axes {(n1, n2)}")
    if psi.min() < 0 or psi.max() >= d.shape[1]:
        raise ValueError("output map must be total on the reconstruction alphabet")
    return d[:, psi]
