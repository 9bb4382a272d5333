"""Numerical solution of phi(p, t) = inf { I_p(f) : T(f) >= t } over step graphons."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import DomainError
from .graphon import StepGraphon, mix_toward_one, mix_toward_p, resample_equal, triangle_density
from .rate import T_MAX, candidate_objectives, ip_graphon, ip_values

MAX_BLOCKS = 64
CLAMP = 1e-12
FEAS_TOL = 1e-8
DAMPING = 0.5
BETA_MAX = 200.0
PENALTY_SCHEDULE = (10.0, 1e2, 1e3, 1e4)
STAGE_ITERS = 2000
N_RANDOM = 8
# smallest unnormalised block mass in free-weight branches
WEIGHT_FLOOR = 1e-9


class Method(str, enum.Enum):
    FIXED_POINT = "FixedPoint"
    PROJECTED_GRADIENT = "ProjectedGradient"
    CANDIDATE_CONSTANT = "CandidateConstant"
    CANDIDATE_CLIQUE = "CandidateClique"


@dataclass
class Branch:
    """Outcome of one (start, method) branch of the multi-start search."""

    label: str
    method: Method
    graphon: StepGraphon
    objective: float
    achieved_t: float
    converged: bool
    iterations: int
    # penalised objective at every accepted iterate, one list per penalty stage
    history: list[list[float]] = field(default_factory=list, repr=False)


@dataclass
class SolveResult:
    optimizer: StepGraphon
    objective: float
    achieved_t: float
    method: Method
    converged: bool
    iterations: int
    multistart_log: list[tuple[str, float]]
    start_label: str = ""
    branches: list[Branch] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "achieved_t": self.achieved_t,
            "method": self.method.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "start_label": self.start_label,
            "multistart_log": [[label, obj] for label, obj in self.multistart_log],
            "optimizer": self.optimizer.to_dict(),
        }


def _check_t(t: float, open_left: bool = False) -> float:
    t = float(t)
    lo_ok = t > 0.0 if open_left else t >= 0.0
    if not (lo_ok and t < T_MAX):
        raise DomainError(f"t must lie in {'(' if open_left else '['}0, 1/6), got {t}")
    return t


def _check_p(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return float(p)


def candidate_constant(t: float) -> StepGraphon:
    """c_t: the constant graphon (6t)^(1/3)."""
    t = _check_t(t)
    return StepGraphon.constant(min(float(np.cbrt(6.0 * t)), 1.0))


def candidate_clique(t: float) -> StepGraphon:
    """chi_t: a clique block of mass b = (6t)^(1/3), zero elsewhere."""
    t = _check_t(t, open_left=True)
    b = float(np.cbrt(6.0 * t))
    if b >= 1.0:
        return StepGraphon.constant(1.0)
    return StepGraphon([b, 1.0 - b], [[1.0, 0.0], [0.0, 0.0]])


# -- block-matrix calculus on equal-weight K x K values ---------------------

def _paths(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """m_ij = sum_k w_k a_ik a_kj."""
    return a @ (w[:, None] * a)


def _tri(a: np.ndarray, w: np.ndarray) -> float:
    return float(w @ (a * _paths(a, w)) @ w) / 6.0


def _rate(a: np.ndarray, w: np.ndarray, p: float) -> float:
    return float(w @ ip_values(a, p) @ w)


def tighten(f: StepGraphon, p: float, t: float, iters: int = 200) -> StepGraphon:
    """Move ``f`` onto the surface T = t while keeping T >= t.

    Surplus density is traded away by mixing toward ``p`` (which lowers I_p);
    a deficit is repaired by mixing toward one.  Bisection keeps the feasible end.
    """
    ft = triangle_density(f)
    if ft == t:
        return f
    if ft > t:
        mix = lambda d: mix_toward_p(f, d, p)  # noqa: E731
        lo, hi = 0.0, 1.0  # lo is feasible
        keep_lo = True
    else:
        mix = lambda d: mix_toward_one(f, d)  # noqa: E731
        lo, hi = 0.0, 1.0  # hi is feasible
        keep_lo = False
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        feasible = triangle_density(mix(mid)) >= t
        if feasible == keep_lo:
            lo = mid
        else:
            hi = mid
    return mix(lo if keep_lo else hi)


def _fixed_point_at(beta: float, a0: np.ndarray, w: np.ndarray, p: float,
                    max_iter: int = 500, tol: float = 1e-12):
    """Damped iteration of a <- sigmoid(logit p + beta m(a)) from ``a0``."""
    lp = logit(p)
    a = a0
    for it in range(1, max_iter + 1):
        target = expit(lp + beta * _paths(a, w))
        new = np.clip((1.0 - DAMPING) * a + DAMPING * target, CLAMP, 1.0 - CLAMP)
        step = float(np.max(np.abs(new - a)))
        a = new
        if step < tol:
            return a, True, it
    return a, False, max_iter


def _solve_fixed_point(a0: np.ndarray, w: np.ndarray, p: float, t: float, label: str) -> Branch:
    """Bisection on beta in [0, BETA_MAX] so that the fixed point's T crosses t."""
    total = 0
    hi_a, hi_ok, n = _fixed_point_at(BETA_MAX, a0, w, p)
    total += n
    if _tri(hi_a, w) < t:
        g = StepGraphon(w, _sym(hi_a))
        return Branch(label, Method.FIXED_POINT, g, _rate(hi_a, w, p), _tri(hi_a, w), False, total)
    lo, hi = 0.0, BETA_MAX
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        a, ok, n = _fixed_point_at(mid, a0, w, p)
        total += n
        if _tri(a, w) >= t:
            hi, hi_a, hi_ok = mid, a, ok
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(hi, 1.0):
            break
    g = tighten(StepGraphon(w, _sym(hi_a)), p, t)
    return Branch(label, Method.FIXED_POINT, g, ip_graphon(g, p), triangle_density(g), hi_ok, total)


def _sym(a: np.ndarray) -> np.ndarray:
    return np.clip(0.5 * (a + a.T), 0.0, 1.0)


def _solve_gradient(a0: np.ndarray, w: np.ndarray, p: float, t: float, label: str,
                    free_weights: bool = False) -> Branch:
    """Augmented-Lagrangian penalty stages, each minimised by box-projected L-BFGS-B.

    The constraint enters through its relative violation 1 - T/t, so the
    penalty has the same strength at every scale of t.  With ``free_weights``
    the block masses are optimised too, parametrised as w = v / sum(v) with
    v in [WEIGHT_FLOOR, 1].
    """
    k = w.size
    iu = np.triu_indices(k)
    mult = np.where(iu[0] == iu[1], 1.0, 2.0)
    lp = logit(p)
    nw = k if free_weights else 0

    def unpack(x):
        if free_weights:
            v = x[:k]
            wx = v / v.sum()
        else:
            v, wx = None, w
        a = np.zeros((k, k))
        a[iu] = x[nw:]
        return v, wx, a + np.triu(a, 1).T

    lam = 0.0
    x = np.clip(a0[iu], CLAMP, 1.0 - CLAMP)
    bounds = [(CLAMP, 1.0 - CLAMP)] * x.size
    if free_weights:
        x = np.concatenate([w / w.max(), x])
        bounds = [(WEIGHT_FLOOR, 1.0)] * k + bounds
    total = 0
    history: list[list[float]] = []
    ok = False
    schedule = list(PENALTY_SCHEDULE) + [PENALTY_SCHEDULE[-1]] * 8
    for mu in schedule:
        def fun(x, mu=mu, lam=lam):
            v, wx, a = unpack(x)
            m = _paths(a, wx)
            ww = np.outer(wx, wx)
            cost = ip_values(a, p)
            tri = float(np.sum(ww * a * m)) / 6.0
            shift = max(0.0, lam + mu * (1.0 - tri / t))
            val = float(np.sum(ww * cost)) + (shift**2 - lam**2) / (2.0 * mu)
            grad_a = ww * (0.5 * (logit(a) - lp) - shift * 0.5 * m / t)
            grad = grad_a[iu] * mult
            if free_weights:
                g_w = 2.0 * cost @ wx - shift * 0.5 * ((a * m) @ wx) / t
                grad = np.concatenate([(g_w - g_w @ wx) / v.sum(), grad])
            return val, grad

        trace = [fun(x)[0]]

        def record(xk, fun=fun, trace=trace):
            trace.append(float(fun(xk)[0]))

        res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds, callback=record,
                       options={"maxiter": STAGE_ITERS, "ftol": 1e-15, "gtol": 1e-12})
        x = res.x
        total += int(res.nit)
        history.append(trace)
        _, wx, a = unpack(x)
        tri = _tri(a, wx)
        lam = max(0.0, lam + mu * (1.0 - tri / t))
        ok = abs(t - tri) < 1e-9 * max(1.0, t) and res.status in (0,)
        if ok and mu >= PENALTY_SCHEDULE[-1]:
            break
    _, wx, a = unpack(x)
    g = tighten(StepGraphon(wx, _sym(a)), p, t)
    return Branch(label, Method.PROJECTED_GRADIENT, g, ip_graphon(g, p), triangle_density(g),
                  ok, total, history)


def _weighted_starts(p: float, t: float) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Small free-weight starts: hubs, planted cliques and a clique with a hub."""
    u = float(np.cbrt(6.0 * t))
    hi = 1.0 - 1e-3
    starts = []
    for eps in (1e-3, 1e-2, 0.1):
        starts.append((f"hub{eps:g}", np.array([eps, 1.0 - eps]), np.array([[p, hi], [hi, u]])))
    for b in (0.5 * u, u):
        starts.append((f"planted{b:.3g}", np.array([b, 1.0 - b]), np.array([[hi, p], [p, p]])))
    starts.append(("clique_hub", np.array([0.5 * u, 0.01, 1.0 - 0.5 * u - 0.01]),
                   np.array([[hi, hi, p], [hi, p, hi], [p, hi, p]])))
    return [(label, w, np.clip(a, CLAMP, 1.0 - CLAMP)) for label, w, a in starts]


def _starts(p: float, t: float, k: int, seed: int, n_random: int, extra_starts) -> list[tuple[str, np.ndarray]]:
    u = float(np.cbrt(6.0 * t))
    starts = [("constant", np.full((k, k), u))]
    starts.append(("clique", resample_equal(candidate_clique(t), k).values.copy()))
    for r in range(n_random):
        rng = np.random.default_rng([seed, r])
        a = rng.uniform(0.02, 0.98, size=(k, k))
        starts.append((f"random{r}", np.triu(a) + np.triu(a, 1).T))
    side = np.arange(k) < (k + 1) // 2
    across = side[:, None] != side[None, :]
    starts.append(("bipartite", np.where(across, max(u, 0.9), p)))
    for i, f in enumerate(extra_starts):
        starts.append((f"extra{i}", resample_equal(f, k).values.copy()))
    return [(label, np.clip(a, CLAMP, 1.0 - CLAMP)) for label, a in starts]


def _candidate_branch(label: str, method: Method, f: StepGraphon, p: float) -> Branch:
    return Branch(label, method, f, ip_graphon(f, p), triangle_density(f), True, 0)


def solve_phi(p: float, t: float, K: int = 8, *, seed: int = 0, method: str = "auto",
              n_random: int = N_RANDOM, extra_starts=(), free_weights: bool = True,
              threads: int = 1) -> SolveResult:
    """Best feasible K-block optimizer of I_p subject to T >= t.

    ``method`` is "auto" (both iterative methods), "fixed-point" or "gradient".
    With ``free_weights`` a few 2- and 3-block gradient branches also optimise
    the block masses, which reaches hub and small-clique structures that K
    equal blocks cannot represent.
    The closed-form candidates c_t and chi_t, and any ``extra_starts`` after
    tightening, always compete, so the result is never worse than them.
    """
    p = _check_p(p)
    t = _check_t(t)
    if not 1 <= K <= MAX_BLOCKS:
        raise DomainError(f"K must lie in [1, {MAX_BLOCKS}], got {K}")
    if method not in ("auto", "fixed-point", "gradient"):
        raise DomainError(f"unknown method {method!r}")
    if t <= p**3 / 6.0:
        f = StepGraphon.constant(p)
        return SolveResult(f, 0.0, triangle_density(f), Method.CANDIDATE_CONSTANT, True, 0,
                           [("trivial", 0.0)], "trivial")

    w = np.full(K, 1.0 / K)
    branches = [_candidate_branch("candidate_constant", Method.CANDIDATE_CONSTANT,
                                  candidate_constant(t), p)]
    if t > 0:
        branches.append(_candidate_branch("candidate_clique", Method.CANDIDATE_CLIQUE,
                                          candidate_clique(t), p))
    for i, f in enumerate(extra_starts):
        g = tighten(f, p, t)
        branches.append(_candidate_branch(f"extra{i}_direct", Method.CANDIDATE_CONSTANT
                                          if g.blocks == 1 else Method.PROJECTED_GRADIENT, g, p))

    jobs = []
    for label, a0 in _starts(p, t, K, seed, n_random, extra_starts):
        if method in ("auto", "fixed-point"):
            jobs.append(partial(_solve_fixed_point, a0, w, p, t, label + "/fp"))
        if method in ("auto", "gradient"):
            jobs.append(partial(_solve_gradient, a0, w, p, t, label + "/pg"))
    if method in ("auto", "gradient") and free_weights:
        for label, w0, a0 in _weighted_starts(p, t):
            jobs.append(partial(_solve_gradient, a0, w0, p, t, label + "/pgw", free_weights=True))

    if threads == 1:
        branches.extend(job() for job in jobs)
    else:
        with ThreadPoolExecutor(max_workers=None if threads <= 0 else threads) as ex:
            branches.extend(ex.map(lambda job: job(), jobs))

    feasible = [b for b in branches if b.achieved_t >= t - FEAS_TOL]
    best = min(feasible, key=lambda b: b.objective)  # min keeps the first of equal values
    log = [(b.label, b.objective) for b in branches]
    return SolveResult(best.graphon, best.objective, best.achieved_t, best.method, best.converged,
                       sum(b.iterations for b in branches), log, best.label, branches)


def scaling_check(p: float, t: float, s: float, K: int = 8, seed: int = 0, **opts) -> tuple[float, float]:
    """(phi(p, t), (t/s)^(1/3) phi(p, s)) from two solver runs.

    The optimizer at ``s`` mixed toward ``p`` is offered to the ``t`` run as an
    extra start, so the solver sees the feasible point used in the classical
    proof of the strict inequality.
    """
    p = _check_p(p)
    if not (p**3 / 6.0 < t < s < T_MAX):
        raise DomainError("need p^3/6 < t < s < 1/6")
    at_s = solve_phi(p, s, K, seed=seed, **opts)
    delta = 1.0 - (t / s) ** (1.0 / 3.0)
    warm = mix_toward_p(at_s.optimizer, delta, p)
    at_t = solve_phi(p, t, K, seed=seed, extra_starts=(warm,), **opts)
    return at_t.objective, (t / s) ** (1.0 / 3.0) * at_s.objective


def small_p_limit_check(t: float, p_list, K: int = 8, seed: int = 0, budget: int = 20_000,
                        **opts) -> list[dict]:
    """phi(p, t) / log(1/p) and delta_cut(optimizer, chi_t) along decreasing p."""
    from .cut import delta_cut

    t = _check_t(t, open_left=True)
    target = float(np.cbrt(6.0 * t) ** 2 / 2.0)
    chi = candidate_clique(t)
    rows = []
    for p in p_list:
        res = solve_phi(p, t, K, seed=seed, **opts)
        ratio = res.objective / math.log(1.0 / p)
        dist = delta_cut(res.optimizer, chi, budget=budget, seed=seed, blocks=K).value
        rows.append({"p": float(p), "objective": res.objective, "ratio": ratio, "target": target,
                     "gap": abs(ratio - target), "delta_cut_clique": dist,
                     "clique_ratio": candidate_objectives(p, t)[1] / math.log(1.0 / p)})
    return rows


def distinct_optima(result: SolveResult, threshold: float = 1e-3, rel_objective: float = 1e-6,
                    budget: int = 20_000, seed: int = 0) -> list[Branch]:
    """Near-optimal branches that are pairwise more than ``threshold`` apart in delta_cut.

    Branches whose objective is within ``rel_objective`` (relative) of the best
    are compared greedily in start order.
    """
    from .cut import delta_cut

    best = result.objective
    near = [b for b in result.branches
            if b.achieved_t >= triangle_density(result.optimizer) - 1e-6
            and b.objective <= best + rel_objective * max(1.0, abs(best))]
    kept: list[Branch] = []
    for b in near:
        k = max(b.graphon.blocks, 8)
        if all(delta_cut(b.graphon, c.graphon, budget=budget, seed=seed, blocks=k).value > threshold
               for c in kept):
            kept.append(b)
    return kept
