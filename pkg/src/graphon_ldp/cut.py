"""Cut norm, cut distance and the block-permutation approximation of delta_cut."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SizeError
from .graphon import SimpleGraph, StepGraphon, common_refinement, overlap_matrix, resample_equal

MAX_EXACT_BLOCKS = 14
MAX_EXACT_PERM_BLOCKS = 8
DEFAULT_BUDGET = 100_000
COOLING = 0.995
# restarts used by the cheap norm inside annealing
_ANNEAL_RESTARTS = 8
_PERM_CHUNK = 2048


@dataclass(frozen=True)
class CutResult:
    """Value of a cut norm together with the optimizing block sets.

    ``weights`` and ``kernel`` describe the (refined, possibly permuted)
    difference on which ``s_set`` and ``t_set`` are defined.
    """

    value: float
    s_set: tuple[bool, ...]
    t_set: tuple[bool, ...]
    exact: bool
    weights: tuple[float, ...] = ()
    kernel: tuple[tuple[float, ...], ...] = ()
    permutation: tuple[int, ...] | None = None
    blocks: int | None = None
    permutation_exact: bool | None = None

    def bilinear(self) -> float:
        """Recompute |sum_ij h_ij w_i w_j s_i t_j| from the stored sets."""
        w = np.asarray(self.weights)
        h = np.asarray(self.kernel)
        s = np.asarray(self.s_set, dtype=float)
        t = np.asarray(self.t_set, dtype=float)
        return abs(float((s * w) @ h @ (t * w)))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "exact": self.exact,
            "s_set": [i for i, b in enumerate(self.s_set) if b],
            "t_set": [i for i, b in enumerate(self.t_set) if b],
            "blocks": self.blocks,
            "permutation": None if self.permutation is None else list(self.permutation),
            "permutation_exact": self.permutation_exact,
        }


def _prepare(kernel, weights) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(kernel, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("kernel must be a square matrix")
    k = h.shape[0]
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (k,):
        raise ValueError("weights do not match kernel size")
    return h, w


@lru_cache(maxsize=None)
def _all_subsets(k: int) -> np.ndarray:
    codes = np.arange(2**k, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k)) & 1
    out = bits.astype(float)
    out.setflags(write=False)
    return out


def _result(value, s, t, exact, h, w, **extra) -> CutResult:
    return CutResult(
        float(value),
        tuple(bool(x) for x in s),
        tuple(bool(x) for x in t),
        exact,
        tuple(float(x) for x in w),
        tuple(tuple(float(x) for x in row) for row in h),
        **extra,
    )


def cut_norm_exact(kernel, weights=None) -> CutResult:
    """max over s, t in {0,1}^K of |sum_ij h_ij w_i w_j s_i t_j|.

    Fractional memberships give a bilinear objective, so the supremum over
    measurable sets is attained at 0/1 vertices.  For a fixed ``s`` the best
    ``t`` keeps exactly the columns of one sign, so only ``s`` is enumerated.
    """
    h, w = _prepare(kernel, weights)
    k = h.shape[0]
    if k > MAX_EXACT_BLOCKS:
        raise SizeError(f"{k} blocks exceed the exact cut-norm cap of {MAX_EXACT_BLOCKS}")
    b = h * np.outer(w, w)
    subsets = _all_subsets(k)
    cols = subsets @ b
    pos = np.where(cols > 0, cols, 0.0).sum(axis=1)
    neg = np.where(cols < 0, cols, 0.0).sum(axis=1)
    i_pos, i_neg = int(np.argmax(pos)), int(np.argmin(neg))
    if pos[i_pos] >= -neg[i_neg]:
        s = subsets[i_pos]
        t = cols[i_pos] > 0
        value = pos[i_pos]
    else:
        s = subsets[i_neg]
        t = cols[i_neg] < 0
        value = -neg[i_neg]
    return _result(value, s, t, True, h, w)


def _alternate(b: np.ndarray, starts: np.ndarray, max_iter: int = 100):
    """Alternating maximisation of s^T b t from a batch of starting ``s`` rows."""
    s = starts
    for _ in range(max_iter):
        t = (s @ b >= 0).astype(float)
        s_new = (t @ b.T >= 0).astype(float)
        if np.array_equal(s_new, s):
            break
        s = s_new
    t = (s @ b >= 0).astype(float)
    vals = np.einsum("ri,ij,rj->r", s, b, t)
    return s, t, vals


def cut_norm_heuristic(kernel, weights=None, restarts: int = 50, seed: int = 0) -> CutResult:
    """Best local optimum of alternating maximisation over ``restarts`` random starts.

    The first start is the full set; ties include the block.  The result is a
    feasible point, hence a lower bound on the cut norm.
    """
    h, w = _prepare(kernel, weights)
    k = h.shape[0]
    rng = np.random.default_rng(seed)
    b = h * np.outer(w, w)
    best = (-1.0, None, None)
    for sign in (1.0, -1.0):
        starts = (rng.random((max(restarts, 1), k)) < 0.5).astype(float)
        starts[0] = 1.0
        s, t, vals = _alternate(sign * b, starts)
        r = int(np.argmax(vals))
        if vals[r] > best[0]:
            best = (float(vals[r]), s[r], t[r])
    value, s, t = best
    return _result(max(value, 0.0), s, t, False, h, w)


def _difference(f: StepGraphon, g: StepGraphon) -> tuple[np.ndarray, np.ndarray]:
    f2, g2 = common_refinement(f, g)
    return f2.values - g2.values, f2.weights


def cut_distance(f: StepGraphon, g: StepGraphon, restarts: int = 50, seed: int = 0) -> CutResult:
    """d_cut(f, g) on the common refinement; exact up to MAX_EXACT_BLOCKS blocks."""
    h, w = _difference(f, g)
    if h.shape[0] <= MAX_EXACT_BLOCKS:
        return cut_norm_exact(h, w)
    return cut_norm_heuristic(h, w, restarts=restarts, seed=seed)


def _exact_norms_batch(diffs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact cut norms for a stack of K x K kernels sharing weights ``w``."""
    k = w.size
    subsets = _all_subsets(k)
    cols = np.matmul(subsets, diffs * np.outer(w, w))
    pos = np.maximum(cols, 0.0).sum(axis=2).max(axis=1)
    neg = np.minimum(cols, 0.0).sum(axis=2).min(axis=1)
    return np.maximum(pos, -neg)


def _default_blocks(f: StepGraphon, g: StepGraphon) -> int:
    k = max(f.blocks, g.blocks)
    if f.is_uniform() and g.is_uniform() and f.blocks == g.blocks:
        return k
    return max(k, MAX_EXACT_PERM_BLOCKS)


def _twin_classes(a: np.ndarray) -> np.ndarray:
    """Label blocks so that swapping two blocks with equal labels leaves ``a`` unchanged."""
    k = a.shape[0]
    labels = -np.ones(k, dtype=int)
    nxt = 0
    for i in range(k):
        if labels[i] >= 0:
            continue
        labels[i] = nxt
        for j in range(i + 1, k):
            if labels[j] < 0:
                swap = np.arange(k)
                swap[[i, j]] = [j, i]
                if np.array_equal(a[np.ix_(swap, swap)], a):
                    labels[j] = nxt
        nxt += 1
    return labels


def _arrangement_count(a: np.ndarray) -> int:
    _, counts = np.unique(_twin_classes(a), return_counts=True)
    return math.factorial(a.shape[0]) // math.prod(math.factorial(c) for c in counts)


def _distinct_permutations(a: np.ndarray):
    """Block permutations of ``a`` up to swaps of interchangeable blocks."""
    labels = _twin_classes(a)
    members = {c: np.flatnonzero(labels == c).tolist() for c in set(labels.tolist())}
    remaining = {c: len(m) for c, m in members.items()}
    k = labels.size
    arrangement: list[int] = []

    def rec():
        if len(arrangement) == k:
            used = {c: 0 for c in members}
            perm = []
            for c in arrangement:
                perm.append(members[c][used[c]])
                used[c] += 1
            yield perm
            return
        for c in sorted(remaining):
            if remaining[c]:
                remaining[c] -= 1
                arrangement.append(c)
                yield from rec()
                arrangement.pop()
                remaining[c] += 1

    return rec()


def _degree_order(a: np.ndarray) -> np.ndarray:
    return np.argsort(-a.sum(axis=1), kind="stable")


def delta_cut(f: StepGraphon, g: StepGraphon, budget: int = DEFAULT_BUDGET, seed: int = 0,
              blocks: int | None = None) -> CutResult:
    """Upper bound on delta_cut(f, g) at resolution ``blocks``.

    Both graphons are averaged onto ``blocks`` equal-mass blocks and
    d_cut(f, g o pi) is minimised over block permutations pi: exhaustively for
    at most MAX_EXACT_PERM_BLOCKS blocks, by simulated annealing with
    transposition moves otherwise.
    """
    k = _default_blocks(f, g) if blocks is None else int(blocks)
    fa = resample_equal(f, k).values
    ga = resample_equal(g, k).values
    w = np.full(k, 1.0 / k)
    if np.ptp(fa) == 0.0 or np.ptp(ga) == 0.0:
        # a constant kernel is fixed by every relabelling
        best_perm = np.arange(k)
        perm_exact = True
    elif k <= MAX_EXACT_PERM_BLOCKS:
        # search over relabellings of whichever side has more interchangeable blocks
        swap = _arrangement_count(fa) < _arrangement_count(ga)
        base, moving = (ga, fa) if swap else (fa, ga)
        best_val, best_perm = math.inf, None
        perms = _distinct_permutations(moving)
        while True:
            chunk = np.array(list(itertools.islice(perms, _PERM_CHUNK)), dtype=int)
            if chunk.size == 0:
                break
            moved = moving[chunk[:, :, None], chunk[:, None, :]]
            vals = _exact_norms_batch(base[None] - moved, w)
            i = int(np.argmin(vals))
            if vals[i] < best_val - 1e-15:
                best_val, best_perm = float(vals[i]), chunk[i]
        if swap:
            # d(f o s, g) = d(f, g o s^-1)
            best_perm = np.argsort(best_perm)
        perm_exact = True
    else:
        best_perm = _anneal(fa, ga, w, budget, seed)
        perm_exact = False
    gp = ga[np.ix_(best_perm, best_perm)]
    if k <= MAX_EXACT_BLOCKS:
        res = cut_norm_exact(fa - gp, w)
    else:
        res = cut_norm_heuristic(fa - gp, w, restarts=50, seed=seed)
    return CutResult(
        res.value, res.s_set, res.t_set, res.exact and perm_exact, res.weights, res.kernel,
        permutation=tuple(int(x) for x in best_perm), blocks=k, permutation_exact=perm_exact,
    )


def _anneal(fa: np.ndarray, ga: np.ndarray, w: np.ndarray, budget: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = w.size
    cheap_seed = int(rng.integers(2**31))

    def energy(perm):
        return cut_norm_heuristic(fa - ga[np.ix_(perm, perm)], w,
                                  restarts=_ANNEAL_RESTARTS, seed=cheap_seed).value

    # align blocks by degree as a second starting point
    aligned = np.empty(k, dtype=int)
    aligned[_degree_order(fa)] = _degree_order(ga)
    starts = [np.arange(k), aligned]
    energies = [energy(s) for s in starts]
    cur = starts[int(np.argmin(energies))].copy()
    cur_e = min(energies)
    best, best_e = cur.copy(), cur_e
    temp = max(cur_e, 1e-6) * 0.1
    for _ in range(max(budget - 2, 0)):
        i, j = rng.choice(k, size=2, replace=False)
        cand = cur.copy()
        cand[i], cand[j] = cand[j], cand[i]
        e = energy(cand)
        if e <= cur_e or rng.random() < math.exp(-(e - cur_e) / max(temp, 1e-300)):
            cur, cur_e = cand, e
            if e < best_e:
                best, best_e = cand.copy(), e
        temp *= COOLING
    return best


def graph_quotient(g: SimpleGraph, k: int, sort_by_degree: bool = True) -> StepGraphon:
    """Average the adjacency of ``g`` over the vertex pairs of each of ``k`` x ``k`` cells.

    Vertex ``i`` covers [i/n, (i+1)/n); cells average over distinct pairs only,
    so self-pairs on the diagonal do not dilute the density.  With
    ``sort_by_degree`` vertices are first relabelled by decreasing degree
    (stable), which aligns dense parts before the block-permutation search.
    """
    if sort_by_degree:
        g = g.relabel(np.argsort(-g.degrees(), kind="stable"))
    o = overlap_matrix(np.linspace(0.0, 1.0, g.n + 1), k)
    num = o @ g.adjacency.astype(float) @ o.T
    mass = o.sum(axis=1)
    den = np.outer(mass, mass) - o @ o.T
    vals = np.divide(num, den, out=np.zeros_like(num), where=den > 1e-15)
    vals = np.clip(0.5 * (vals + vals.T), 0.0, 1.0)
    return StepGraphon(np.full(k, 1.0 / k), vals)


def graph_to_reference_distance(g: SimpleGraph, ref: StepGraphon, k: int,
                                budget: int = DEFAULT_BUDGET, seed: int = 0,
                                sort_by_degree: bool = True) -> float:
    """delta_cut between the ``k``-block quotient of ``g`` and ``ref``."""
    q = graph_quotient(g, k, sort_by_degree=sort_by_degree)
    return delta_cut(q, ref, budget=budget, seed=seed, blocks=k).value
