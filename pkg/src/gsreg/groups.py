"""Group-structured vector algebra shared by all solver components.

A group structure partitions the coordinates ``{0..p-1}`` into ``m``
disjoint, nonempty index sets.  Everything downstream (the weighted
l2,1 solver, the multi-stage outer loop, the benchmark oracles) iterates
groupwise, so the structure caches both the index lists and a
coordinate-to-group lookup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoxConstraint:
    """The l-infinity ball ``{x : ||x||_inf <= R}`` with radius ``R > 0``."""

    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"box radius must be positive, got {self.R}")


class GroupStructure:
    """An ordered partition of ``{0..p-1}`` into ``m`` nonempty groups.

    Groups are stored 0-based internally; the JSON wire format uses
    1-based coordinate indices.  Instances are immutable and safe to
    share across concurrent solves.
    """

    def __init__(self, p: int, groups):
        groups = tuple(np.asarray(idx, dtype=np.intp) for idx in groups)
        if p <= 0:
            raise ValueError("ambient dimension p must be positive")
        seen = np.full(p, -1, dtype=np.intp)
        for gid, idx in enumerate(groups):
            if idx.size == 0:
                raise ValueError(f"group {gid} is empty")
            if idx.min() < 0 or idx.max() >= p:
                raise ValueError(f"group {gid} has indices outside [0, {p})")
            if np.any(seen[idx] >= 0):
                raise ValueError(f"group {gid} overlaps an earlier group")
            seen[idx] = gid
        if np.any(seen < 0):
            missing = int(np.flatnonzero(seen < 0)[0])
            raise ValueError(f"coordinate {missing} belongs to no group")
        self.p = int(p)
        self.groups = groups
        self._group_of = seen
        self._group_of.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.groups)

    def group_of(self, j: int) -> int:
        """Group id containing coordinate ``j`` (O(1) lookup)."""
        return int(self._group_of[j])

    def sizes(self) -> np.ndarray:
        return np.array([idx.size for idx in self.groups], dtype=np.intp)

    def __eq__(self, other):
        return (
            isinstance(other, GroupStructure)
            and self.p == other.p
            and self.m == other.m
            and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups))
        )

    def __repr__(self):
        return f"GroupStructure(p={self.p}, m={self.m})"

    # -- JSON wire format: {"p": int, "groups": [[1-based ints, ...], ...]} --

    def to_json(self) -> str:
        return json.dumps(
            {"p": self.p, "groups": [(np.asarray(idx) + 1).tolist() for idx in self.groups]}
        )

    @classmethod
    def from_json(cls, text: str) -> "GroupStructure":
        obj = json.loads(text)
        groups = [np.asarray(idx, dtype=np.intp) - 1 for idx in obj["groups"]]
        return cls(int(obj["p"]), groups)


def contiguous_groups(p: int, m: int) -> GroupStructure:
    """Split ``{0..p-1}`` into ``m`` contiguous blocks of near-equal size."""
    if not 1 <= m <= p:
        raise ValueError("need 1 <= m <= p")
    bounds = np.linspace(0, p, m + 1).astype(np.intp)
    return GroupStructure(p, [np.arange(bounds[i], bounds[i + 1]) for i in range(m)])


def _check_dim(x: np.ndarray, g: GroupStructure) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.p,):
        raise ValueError(f"vector has shape {x.shape}, expected ({g.p},)")
    return x


def group_norms(x, g: GroupStructure) -> np.ndarray:
    """Per-group Euclidean norms, the map G(x)."""
    x = _check_dim(x, g)
    return np.array([np.linalg.norm(x[idx]) for idx in g.groups])


def l21_norm(x, g: GroupStructure, weights=None) -> float:
    """Weighted sum of group norms; unit weights when omitted."""
    norms = group_norms(x, g)
    if weights is None:
        return float(norms.sum())
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (g.m,):
        raise ValueError(f"weights have shape {weights.shape}, expected ({g.m},)")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    return float(weights @ norms)


def approx_group_zero_norm(x, g: GroupStructure, tol: float = 1e-6) -> int:
    """Number of groups with norm strictly above ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(group_norms(x, g) > tol))


def equilibrium_residual(x, w, g: GroupStructure) -> float:
    """The complementarity measure ``<e - w, G(x)>``; zero certifies local optimality."""
    w = np.asarray(w, dtype=float)
    if w.shape != (g.m,):
        raise ValueError(f"w has shape {w.shape}, expected ({g.m},)")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("w must lie in [0, 1]^m")
    return float((1.0 - w) @ group_norms(x, g))


def project_box(x, box: BoxConstraint) -> np.ndarray:
    """Componentwise clamp onto the l-infinity ball."""
    return np.clip(np.asarray(x, dtype=float), -box.R, box.R)
