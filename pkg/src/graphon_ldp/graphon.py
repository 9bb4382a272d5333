"""Block-constant graphons, finite simple graphs and exact densities on them.

Every graphon handled by the package is a step function: block masses
``weights`` (positive, summing to one) and a symmetric matrix ``values`` with
entries in [0, 1].  All integrals reduce to finite sums over blocks.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, SizeError

WEIGHT_TOL = 1e-12
MAX_REFINED_BLOCKS = 4096
MAX_PATTERN_VERTICES = 8
# cut points closer than this are merged during refinement
_CUT_MERGE_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StepGraphon:
    """Symmetric kernel constant on products of blocks of [0, 1].

    Block ``i`` is the interval ``[c_i, c_{i+1})`` with ``c`` the cumulative
    sum of ``weights``; the kernel equals ``values[i, j]`` on block ``i x j``.
    """

    weights: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        a = np.atleast_2d(np.asarray(self.values, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise DomainError("weights must be a non-empty vector")
        if a.shape != (w.size, w.size):
            raise DomainError(f"values must be {w.size}x{w.size}, got {a.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("block weights must be finite and > 0")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"block weights sum to {w.sum()!r}, not 1")
        if not np.array_equal(a, a.T):
            raise DomainError("values must be exactly symmetric")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise DomainError("values must lie in [0, 1]")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "values", _frozen(a))

    @property
    def blocks(self) -> int:
        return self.weights.size

    @property
    def cut_points(self) -> np.ndarray:
        c = np.concatenate([[0.0], np.cumsum(self.weights)])
        c[-1] = 1.0
        return c

    @classmethod
    def constant(cls, c: float) -> StepGraphon:
        return cls([1.0], [[c]])

    @classmethod
    def uniform(cls, values) -> StepGraphon:
        """Equal-mass blocks carrying the given (symmetric) values."""
        a = np.asarray(values, dtype=float)
        k = a.shape[0]
        return cls(np.full(k, 1.0 / k), a)

    def is_uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.blocks, rtol=0, atol=1e-14))

    def __call__(self, x, y):
        """Evaluate the kernel pointwise (blocks are closed on the left)."""
        c = self.cut_points
        i = np.clip(np.searchsorted(c, x, side="right") - 1, 0, self.blocks - 1)
        j = np.clip(np.searchsorted(c, y, side="right") - 1, 0, self.blocks - 1)
        return self.values[i, j]

    def edge_density(self) -> float:
        w = self.weights
        return float(w @ self.values @ w)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> StepGraphon:
        return cls(d["weights"], d["values"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> StepGraphon:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> StepGraphon:
        return cls.from_json(Path(path).read_text())

    def __repr__(self):
        return f"StepGraphon(blocks={self.blocks}, weights={self.weights!r}, values={self.values!r})"


@dataclass(frozen=True, eq=False)
class SimpleGraph:
    """Finite simple graph on vertices ``0..n-1`` stored as a dense adjacency."""

    n: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if self.n < 0 or adj.shape != (self.n, self.n):
            raise DomainError(f"adjacency must be {self.n}x{self.n}")
        if np.any(np.diagonal(adj)):
            raise DomainError("self-loops are not allowed")
        if not np.array_equal(adj, adj.T):
            raise DomainError("adjacency must be symmetric")
        adj = adj.copy()
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n: int, edges) -> SimpleGraph:
        adj = np.zeros((n, n), dtype=bool)
        e = np.asarray(list(edges), dtype=int).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise DomainError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise DomainError("self-loops are not allowed")
        adj[e[:, 0], e[:, 1]] = True
        adj[e[:, 1], e[:, 0]] = True
        return cls(n, adj)

    @classmethod
    def empty(cls, n: int) -> SimpleGraph:
        return cls(n, np.zeros((n, n), dtype=bool))

    @classmethod
    def complete(cls, n: int) -> SimpleGraph:
        return cls(n, ~np.eye(n, dtype=bool))

    @classmethod
    def cycle(cls, n: int) -> SimpleGraph:
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def path(cls, n: int) -> SimpleGraph:
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    def edges(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array with ``u < v``, lexicographically sorted."""
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return np.column_stack([iu, ju])

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.adjacency)) // 2

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def relabel(self, order) -> SimpleGraph:
        """Graph whose vertex ``k`` is the old vertex ``order[k]``."""
        order = np.asarray(order)
        return SimpleGraph(self.n, self.adjacency[np.ix_(order, order)])

    def to_text(self) -> str:
        e = self.edges()
        lines = [f"{self.n} {len(e)}"] + [f"{u} {v}" for u, v in e]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SimpleGraph:
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows:
            raise DomainError("empty graph file")
        n, m = int(rows[0][0]), int(rows[0][1])
        if len(rows) - 1 != m:
            raise DomainError(f"header announces {m} edges, found {len(rows) - 1}")
        return cls.from_edges(n, [(int(u), int(v)) for u, v in rows[1:]])

    @classmethod
    def load(cls, path) -> SimpleGraph:
        return cls.from_text(Path(path).read_text())


def from_graph(g: SimpleGraph) -> StepGraphon:
    """Empirical graphon of ``g``: ``n`` equal blocks, value 1 exactly on edges."""
    if g.n < 1:
        raise DomainError("graph must have at least one vertex")
    return StepGraphon(np.full(g.n, 1.0 / g.n), g.adjacency.astype(float))


def _scaled(f: StepGraphon) -> np.ndarray:
    s = np.sqrt(f.weights)
    return s[:, None] * f.values * s[None, :]


def triangle_density(f: StepGraphon) -> float:
    """T(f) = (1/6) * sum_ijk w_i w_j w_k a_ij a_jk a_ki."""
    s = _scaled(f)
    return float(np.einsum("ij,jk,ki->", s, s, s)) / 6.0


def hom_density(pattern: SimpleGraph, f: StepGraphon) -> float:
    """Homomorphism density t(H, f), summed over all block assignments of V(H)."""
    k = pattern.n
    if k > MAX_PATTERN_VERTICES:
        raise SizeError(f"pattern has {k} vertices; at most {MAX_PATTERN_VERTICES} supported")
    if k == 0:
        return 1.0
    letters = string.ascii_lowercase[:k]
    operands, subscripts = [], []
    for v in range(k):
        operands.append(f.weights)
        subscripts.append(letters[v])
    for u, v in pattern.edges():
        operands.append(f.values)
        subscripts.append(letters[u] + letters[v])
    expr = ",".join(subscripts) + "->"
    return float(np.einsum(expr, *operands, optimize="greedy"))


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"delta must lie in [0, 1], got {delta}")


def mix_toward_one(f: StepGraphon, delta: float) -> StepGraphon:
    """f + delta (1 - f), clamped to [0, 1]."""
    _check_delta(delta)
    a = np.clip(f.values + delta * (1.0 - f.values), 0.0, 1.0)
    return StepGraphon(f.weights, a)


def mix_toward_p(f: StepGraphon, delta: float, p: float) -> StepGraphon:
    """(1 - delta) f + delta p, clamped to [0, 1]."""
    _check_delta(delta)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    a = np.clip((1.0 - delta) * f.values + delta * p, 0.0, 1.0)
    return StepGraphon(f.weights, a)


def _merge_cuts(*cut_arrays: np.ndarray) -> np.ndarray:
    pts = np.sort(np.concatenate(cut_arrays))
    keep = [0.0]
    for x in pts:
        if x - keep[-1] > _CUT_MERGE_TOL:
            keep.append(float(x))
    if 1.0 - keep[-1] <= _CUT_MERGE_TOL:
        keep[-1] = 1.0
    else:
        keep.append(1.0)
    return np.asarray(keep)


def _restrict(f: StepGraphon, cuts: np.ndarray) -> StepGraphon:
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    idx = np.clip(np.searchsorted(f.cut_points, mids, side="right") - 1, 0, f.blocks - 1)
    return StepGraphon(np.diff(cuts), f.values[np.ix_(idx, idx)])


def common_refinement(f: StepGraphon, g: StepGraphon) -> tuple[StepGraphon, StepGraphon]:
    """Re-express both graphons on the overlay of their block boundaries."""
    if f.blocks == g.blocks and np.array_equal(f.weights, g.weights):
        return f, g
    cuts = _merge_cuts(f.cut_points, g.cut_points)
    if cuts.size - 1 > MAX_REFINED_BLOCKS:
        raise SizeError(f"refinement has {cuts.size - 1} blocks (cap {MAX_REFINED_BLOCKS})")
    return _restrict(f, cuts), _restrict(g, cuts)


def l1_distance(f: StepGraphon, g: StepGraphon) -> float:
    """Integral of |f - g| over the unit square."""
    f2, g2 = common_refinement(f, g)
    w = f2.weights
    return float(w @ np.abs(f2.values - g2.values) @ w)


def permute(f: StepGraphon, perm) -> StepGraphon:
    """Reorder blocks: new block ``i`` is old block ``perm[i]``."""
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(f.blocks)):
        raise DomainError("perm must be a permutation of the block indices")
    return StepGraphon(f.weights[perm], f.values[np.ix_(perm, perm)])


def overlap_matrix(cuts_from: np.ndarray, k: int) -> np.ndarray:
    """``O[I, i]`` = length of equal block ``I`` (of ``k``) intersected with old block ``i``."""
    new = np.linspace(0.0, 1.0, k + 1)
    lo = np.maximum(new[:-1, None], cuts_from[None, :-1])
    hi = np.minimum(new[1:, None], cuts_from[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def resample_equal(f: StepGraphon, k: int) -> StepGraphon:
    """Average ``f`` over the cells of ``k`` equal-mass blocks."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if f.blocks == k and f.is_uniform():
        return StepGraphon(np.full(k, 1.0 / k), f.values)
    o = overlap_matrix(f.cut_points, k)
    m = (k * k) * (o @ f.values @ o.T)
    m = np.clip(0.5 * (m + m.T), 0.0, 1.0)
    return StepGraphon(np.full(k, 1.0 / k), m)
