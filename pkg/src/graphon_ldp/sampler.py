"""Random graph sampling, exact triangle tails and exponentially tilted estimates.

Randomness comes from numpy's counter-based Philox generator keyed by
``(seed, sample)``: pair ``(i, j)`` of sample ``s`` always consumes the same
position of the same stream, so draws are reproducible and can be generated
in any order or in parallel chunks.  Sharing uniforms across edge
probabilities also couples samples monotonically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DomainError, SizeError
from .graphon import SimpleGraph, StepGraphon
from .rate import ip_values

MAX_EXACT_N = 7
MIN_SAMPLES = 100
# largest density the solver accepts
T_MAX_SAMPLING = 1.0 / 6.0 - 1e-9
BATCH = 512


def _pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def edge_uniforms(n: int, seed: int, sample: int = 0) -> np.ndarray:
    """Uniforms for the C(n, 2) vertex pairs in row-major (i < j) order."""
    if seed < 0 or sample < 0:
        raise DomainError("seed and sample must be non-negative")
    bitgen = np.random.Philox(key=int(seed) + (int(sample) << 64))
    return np.random.Generator(bitgen).random(n * (n - 1) // 2)


def _graph_from_pairs(n: int, present: np.ndarray) -> SimpleGraph:
    adj = np.zeros((n, n), dtype=bool)
    iu = _pair_index(n)
    adj[iu] = present
    return SimpleGraph(n, adj | adj.T)


def sample_er(n: int, p: float, seed: int, sample: int = 0) -> SimpleGraph:
    """G(n, p): every pair independently an edge with probability ``p``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    return _graph_from_pairs(n, edge_uniforms(n, seed, sample) < p)


def vertex_blocks(n: int, f: StepGraphon) -> np.ndarray:
    """Block index of each vertex, placing vertex i at the midpoint (i + 1/2) / n."""
    mids = (np.arange(n) + 0.5) / n
    return np.clip(np.searchsorted(f.cut_points, mids, side="right") - 1, 0, f.blocks - 1)


def pair_probabilities(n: int, f: StepGraphon) -> np.ndarray:
    """Edge probabilities q_ij, i < j, of the inhomogeneous graph driven by ``f``."""
    b = vertex_blocks(n, f)
    i, j = _pair_index(n)
    return f.values[b[i], b[j]]


def sample_inhomogeneous(n: int, f: StepGraphon, seed: int, sample: int = 0) -> SimpleGraph:
    """Independent edges with probability f(block(i), block(j))."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return _graph_from_pairs(n, edge_uniforms(n, seed, sample) < pair_probabilities(n, f))


def triangle_count(g: SimpleGraph) -> int:
    """Exact triangle count by intersecting forward adjacency lists.

    Each triangle u < v < w is counted once, at edge (u, v), as the common
    neighbour w > v.
    """
    fwd = [np.flatnonzero(g.adjacency[u, u + 1:]) + u + 1 for u in range(g.n)]
    total = 0
    for u in range(g.n):
        for v in fwd[u]:
            if fwd[u].size and fwd[v].size:
                total += np.intersect1d(fwd[u], fwd[v], assume_unique=True).size
    return int(total)


def _batch_triangles(adj: np.ndarray) -> np.ndarray:
    """Triangle counts of a stack of 0/1 adjacency matrices (exact in float64 at this scale)."""
    a = adj.astype(np.float64)
    return np.rint(np.einsum("bij,bij->b", a @ a, a) / 6.0).astype(np.int64)


@lru_cache(maxsize=None)
def _joint_histogram(n: int) -> np.ndarray:
    """counts[e, k] = number of labelled graphs on n vertices with e edges and k triangles."""
    pairs = list(combinations(range(n), 2))
    m = len(pairs)
    pos = {pr: i for i, pr in enumerate(pairs)}
    codes = np.arange(1 << m, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(m)) & 1).astype(np.int8)
    edges = bits.sum(axis=1)
    tri = np.zeros(codes.size, dtype=np.int64)
    for a, b, c in combinations(range(n), 3):
        tri += bits[:, pos[a, b]] & bits[:, pos[a, c]] & bits[:, pos[b, c]]
    hist = np.zeros((m + 1, math.comb(n, 3) + 1), dtype=np.int64)
    np.add.at(hist, (edges, tri), 1)
    return hist


def triangle_threshold(n: int, t: float) -> int:
    """Smallest triangle count k with k >= t n^3."""
    return max(0, math.ceil(t * n**3 - 1e-9))


def exact_tail(n: int, p: float, t: float) -> float:
    """P(T_{n,p} >= t n^3) by enumerating all labelled graphs on n <= 7 vertices."""
    if n > MAX_EXACT_N:
        raise SizeError(f"exact enumeration supports n <= {MAX_EXACT_N}, got {n}")
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    thr = triangle_threshold(n, t)
    hist = _joint_histogram(n)
    if thr >= hist.shape[1]:
        return 0.0
    m = hist.shape[0] - 1
    e = np.arange(m + 1)
    prob_e = np.exp(xlogy(e, p) + xlogy(m - e, 1.0 - p))
    return float(prob_e @ hist[:, thr:].sum(axis=1))


@dataclass
class TailEstimate:
    n: int
    p: float
    t: float
    log_prob_per_n2: float
    std_error: float
    samples: int
    tilt: StepGraphon | list = field(repr=False)
    accepted: int = 0
    ess: float = 0.0
    warning: str = ""

    @property
    def probability(self) -> float:
        return math.exp(self.log_prob_per_n2 * self.n**2)

    def to_dict(self) -> dict:
        tilts = self.tilt if isinstance(self.tilt, list) else [self.tilt]
        return {
            "n": self.n, "p": self.p, "t": self.t,
            "log_prob_per_n2": self.log_prob_per_n2, "std_error": self.std_error,
            "samples": self.samples, "accepted": self.accepted, "ess": self.ess,
            "warning": self.warning, "tilt": [f.to_dict() for f in tilts],
        }


def _as_tilts(tilt) -> list[StepGraphon]:
    tilts = list(tilt) if isinstance(tilt, (list, tuple)) else [tilt]
    if not tilts:
        raise DomainError("at least one tilt is required")
    for f in tilts:
        if f.values.min() <= 0.0 or f.values.max() >= 1.0:
            raise DomainError("tilt values must lie strictly inside (0, 1)")
    return tilts


def _log_ratio_terms(q: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair log p/q and log (1-p)/(1-q)."""
    return np.log(p) - np.log(q), np.log1p(-p) - np.log1p(-q)


def tilted_samples(n: int, p: float, tilt, samples: int, seed: int):
    """Yield batches (sample ids, pair indicators, log weights, triangle counts).

    With several tilts the proposal is their equal-weight mixture; sample ``s``
    uses component ``s mod len(tilts)`` and is weighted by the mixture density.
    """
    tilts = _as_tilts(tilt)
    qs = np.stack([pair_probabilities(n, f) for f in tilts])
    lp, lq = np.log(p), np.log1p(-p)
    iu = _pair_index(n)
    for start in range(0, samples, BATCH):
        ids = np.arange(start, min(start + BATCH, samples))
        u = np.stack([edge_uniforms(n, seed, int(s)) for s in ids])
        comp = ids % len(tilts)
        x = u < qs[comp]
        if len(tilts) == 1:
            a, b = _log_ratio_terms(qs[0], p)
            logw = x @ a + (~x) @ b
        else:
            # log p(x) - log mean_c q_c(x)
            log_q = np.stack([x @ np.log(q) + (~x) @ np.log1p(-q) for q in qs], axis=1)
            log_p = x.sum(axis=1) * lp + (~x).sum(axis=1) * lq
            logw = log_p - (logsumexp(log_q, axis=1) - math.log(len(tilts)))
        adj = np.zeros((ids.size, n, n), dtype=np.int8)
        adj[:, iu[0], iu[1]] = x
        adj = adj + adj.transpose(0, 2, 1)
        yield ids, x, logw, _batch_triangles(adj)


def _weighted_log_mean(logw: np.ndarray, total: int) -> tuple[float, float]:
    """log of (sum exp(logw)) / total and the delta-method s.e. of that log."""
    top = logw.max()
    r = np.exp(logw - top)
    s1 = r.sum()
    mean = s1 / total
    var = ((r**2).sum() / total - mean**2) * total / max(total - 1, 1)
    se = math.sqrt(max(var, 0.0) / total) / mean
    return float(top + math.log(mean)), se


def tilted_tail_estimate(n: int, p: float, t: float, tilt, samples: int, seed: int) -> TailEstimate:
    """Importance-sampling estimate of n^-2 log P(T_{n,p} >= t n^3).

    ``tilt`` is a step graphon (or a list, used as an equal mixture) whose
    values give the proposal edge probabilities.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if samples < MIN_SAMPLES:
        raise DomainError(f"samples must be >= {MIN_SAMPLES}")
    thr = triangle_threshold(n, t)
    kept = []
    for _, _, logw, tri in tilted_samples(n, p, tilt, samples, seed):
        kept.append(logw[tri >= thr])
    acc = np.concatenate(kept)
    if acc.size == 0:
        return TailEstimate(n, p, t, -math.inf, math.inf, samples, tilt, 0, 0.0,
                            "no sample reached the threshold; strengthen the tilt")
    log_p, se = _weighted_log_mean(acc, samples)
    r = np.exp(acc - acc.max())
    ess = float(r.sum() ** 2 / (r**2).sum())
    return TailEstimate(n, p, t, min(log_p, 0.0) / n**2, se / n**2, samples, tilt,
                        int(acc.size), ess)


def tilt_entropy_cost(n: int, p: float, tilt: StepGraphon) -> float:
    """sum_{i<j} KL(q_ij || p) in nats; divided by n^2 it tends to I_p(tilt)."""
    q = pair_probabilities(n, tilt)
    return float(np.sum(2.0 * ip_values(q, p)))


def finite_size_t(n: int, t: float) -> float:
    """t rescaled so that C(n, 3) (6 t') / 6 equals the threshold density t n^3."""
    return t * n * n / ((n - 1) * (n - 2))


def default_proposal(n: int, p: float, t: float, K: int = 8, seed: int = 0) -> list[StepGraphon]:
    """Mixture proposal built from the solver at the finite-size corrected density.

    The optimizer's values are kept inside [p, 1 - 1/n] so that near-optimal
    neighbours (a few missing clique edges, stray background edges) are
    sampled; the constant graphon at the same density is added as a second
    component when the optimizer is not constant.
    """
    from .solver import candidate_constant, solve_phi

    t_eff = min(finite_size_t(n, t), T_MAX_SAMPLING)
    if t_eff <= p**3 / 6.0:
        return [StepGraphon.constant(p)]
    opt = solve_phi(p, t_eff, K, seed=seed).optimizer
    hi = 1.0 - 1.0 / n
    clip = lambda f: StepGraphon(f.weights, np.clip(f.values, min(p, hi), hi))  # noqa: E731
    const = clip(candidate_constant(t_eff))
    if np.ptp(opt.values) == 0.0:
        return [const]
    return [clip(opt), const]


def conditional_structure_experiment(n: int, p: float, t: float, refs, K: int, samples: int,
                                     seed: int, tilt=None, labels=None, budget: int = 20_000,
                                     max_distance_samples: int | None = None) -> list[dict]:
    """Importance-weighted mean delta_cut from conditioned graphs to each reference.

    Graphs are drawn from the tilted proposal, kept when T >= t n^3 and
    reweighted to G(n, p) conditioned on that event.  ``tilt`` defaults to the
    :func:`default_proposal`; a list is used as a mixture proposal.  When
    ``max_distance_samples`` is set, only the accepted graphs with the largest
    weights (up to that many) enter the distance averages.
    """
    from .cut import graph_to_reference_distance

    refs = list(refs)
    labels = list(labels) if labels is not None else [f"ref{i}" for i in range(len(refs))]
    proposal = default_proposal(n, p, t, K, seed) if tilt is None else _as_tilts(tilt)
    thr = triangle_threshold(n, t)
    graphs, logws = [], []
    for _, x, logw, tri in tilted_samples(n, p, proposal, samples, seed):
        for row, lw in zip(x[tri >= thr], logw[tri >= thr]):
            graphs.append(row)
            logws.append(lw)
    warning = "" if graphs else "no accepted samples"
    if not graphs:
        return [{"ref_label": lab, "mean_distance": math.nan, "std_error": math.nan,
                 "accepted_samples": 0, "ess": 0.0, "warning": warning} for lab in labels]
    logw = np.asarray(logws)
    order = np.argsort(-logw, kind="stable")
    if max_distance_samples is not None:
        order = order[:max_distance_samples]
    wts = np.exp(logw[order] - logw[order].max())
    wts /= wts.sum()
    ess = 1.0 / float((wts**2).sum())
    rows = []
    for ref, lab in zip(refs, labels):
        d = np.array([graph_to_reference_distance(_graph_from_pairs(n, graphs[i]), ref, K,
                                                  budget=budget, seed=seed) for i in order])
        mean = float(wts @ d)
        # delta-method error of the self-normalised ratio estimator
        se = math.sqrt(float(wts**2 @ (d - mean) ** 2))
        rows.append({"ref_label": lab, "mean_distance": mean, "std_error": se,
                     "accepted_samples": len(graphs), "ess": ess, "warning": warning})
    return rows
