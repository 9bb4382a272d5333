"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are also
collected and repeated in the pytest terminal summary.  Run directly with
``python tests/test_acceptance.py`` to get just the eleven lines.
"""

import math
import sys
import time

import numpy as np
import pytest

from graphon_ldp import StepGraphon, from_graph, triangle_density
from graphon_ldp.cut import cut_distance, cut_norm_exact, cut_norm_heuristic, delta_cut
from graphon_ldp.graphon import mix_toward_one, mix_toward_p
from graphon_ldp.rate import Phase, candidate_objectives, classify_phase, h_p, ip_graphon, phase_diagram
from graphon_ldp.sampler import (
    conditional_structure_experiment, default_proposal, exact_tail, tilted_samples,
    tilted_tail_estimate, triangle_count,
)
from graphon_ldp.solver import (
    candidate_clique, candidate_constant, scaling_check, small_p_limit_check, solve_phi,
)

sys.path.insert(0, __file__.rsplit("/", 1)[0])
from conftest import random_graph, random_step_graphon  # noqa: E402

RESULTS: list[str] = []
_small_p_cache: dict = {}


def report(number: int, ok: bool, detail: str, started: float) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.time() - started:.1f}s]"
    RESULTS.append(line)
    print(line)


def test_criterion_01_trivial_phase():
    start = time.time()
    rng = np.random.default_rng(101)
    worst_obj, worst_dev = 0.0, 0.0
    for _ in range(20):
        p = rng.uniform(0.01, 0.99)
        t = rng.uniform(0.0, p**3 / 6)
        r = solve_phi(p, t, 8)
        worst_obj = max(worst_obj, abs(r.objective))
        worst_dev = max(worst_dev, float(np.max(np.abs(r.optimizer.values - p))))
    ok = worst_obj <= 1e-10 and worst_dev == 0.0 and time.time() - start < 60
    report(1, ok, f"max objective {worst_obj:.2e}, max |f - p| {worst_dev:.2e}", start)
    assert ok


def test_criterion_02_replica_symmetric_agreement():
    start = time.time()
    rng = np.random.default_rng(202)
    points = []
    for p in (0.2, 0.35, 0.5):
        while sum(q == p for q, _ in points) < (4 if p == 0.5 else 3):
            t = rng.uniform(p**3 / 6, 1 / 6)
            if classify_phase(p, t).phase is Phase.REPLICA_SYMMETRIC:
                points.append((p, t))
    gap, dist = 0.0, 0.0
    for p, t in points:
        r = solve_phi(p, t, 8)
        gap = max(gap, abs(r.objective - h_p(t, p)))
        dist = max(dist, delta_cut(r.optimizer, candidate_constant(t)).value)
    ok = len(points) == 10 and gap <= 1e-4 and dist <= 1e-3 and time.time() - start < 600
    report(2, ok, f"{len(points)} RS points, max |phi - h| {gap:.2e}, max delta_cut {dist:.2e}", start)
    assert ok


def _symmetry_breaking_p(t: float = 1 / 8):
    """First p in 1e-2, 1e-3, ... where the solver beats c_t with a non-constant graphon."""
    if "p" in _small_p_cache:
        return _small_p_cache["p"], _small_p_cache["result"]
    for p in (1e-2, 1e-3, 1e-4, 1e-5):
        r = solve_phi(p, t, 8)
        i_const, i_clique = candidate_objectives(p, t)
        if (np.ptp(r.optimizer.values) > 0.0 and r.achieved_t >= t - 1e-8
                and r.objective < i_const - 1e-6 and i_clique < i_const):
            _small_p_cache.update(p=p, result=r)
            return p, r
    return None, None


def test_criterion_03_symmetry_breaking():
    start = time.time()
    p, r = _symmetry_breaking_p()
    ok = p is not None and time.time() - start < 600
    if p is None:
        detail = "no p down to 1e-5 broke symmetry"
    else:
        i_const, i_clique = candidate_objectives(p, 1 / 8)
        detail = (f"p={p:g}: phi={r.objective:.6f} < I(c_t)={i_const:.6f}, "
                  f"I(chi_t)={i_clique:.6f}, spread {np.ptp(r.optimizer.values):.3f}")
    report(3, ok, detail, start)
    assert ok


def _regions(points):
    """Split consecutive RS / Broken runs of a phase row into (phase, [t...]) pairs."""
    runs = []
    for pt in points:
        if pt.phase not in (Phase.REPLICA_SYMMETRIC, Phase.BROKEN):
            continue
        if runs and runs[-1][0] is pt.phase:
            runs[-1][1].append(pt.t)
        else:
            runs.append((pt.phase, [pt.t]))
    return runs


def test_criterion_04_double_transition():
    start = time.time()
    p, _ = _symmetry_breaking_p()
    assert p is not None
    diagram = phase_diagram([p], t_points=200)
    runs = _regions(diagram.row(p))
    pattern = [ph for ph, _ in runs]
    shape_ok = (len(runs) >= 3 and pattern[0] is Phase.REPLICA_SYMMETRIC
                and pattern[-1] is Phase.REPLICA_SYMMETRIC and Phase.BROKEN in pattern)
    checks, beaten = [], 0
    if shape_ok:
        broken = max((ts for ph, ts in runs if ph is Phase.BROKEN), key=len)
        for phase, ts in (runs[0], (Phase.BROKEN, broken), runs[-1]):
            ts = np.asarray(ts)
            # grid points nearest the quartiles in t; the grid itself is
            # log-dense at both ends, so index-based picks would hug the edges
            for q in (0.25, 0.5, 0.75):
                t = ts[np.argmin(np.abs(ts - (ts[0] + q * (ts[-1] - ts[0]))))]
                r = solve_phi(p, t, 8)
                h = h_p(t, p)
                if phase is Phase.REPLICA_SYMMETRIC:
                    checks.append(abs(r.objective - h) <= 1e-4)
                else:
                    checks.append(r.objective < h - 1e-6)
        # diagnostic only: the hull test certifies symmetry but is not necessary
        # for it, so some Broken-labelled grid points are symmetric in fact
        beaten = sum(solve_phi(p, t, 8, n_random=2).objective < h_p(t, p) - 1e-6 for t in broken)
    ok = shape_ok and len(checks) == 9 and all(checks) and time.time() - start < 1800
    report(4, ok, f"p={p:g} pattern {'/'.join(ph.value for ph in pattern)}, "
                  f"spot checks {sum(checks)}/{len(checks)}, "
                  f"solver below h at {beaten}/{len(broken)} Broken grid points", start)
    assert ok


def test_criterion_05_small_p_limit():
    start = time.time()
    rows = small_p_limit_check(1 / 48, [1e-2, 1e-3, 1e-4], K=8)
    gaps = [r["gap"] for r in rows]
    dists = [r["delta_cut_clique"] for r in rows]
    ok = (all(a > b for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 0.05
          and all(a > b for a, b in zip(dists, dists[1:])) and time.time() - start < 900)
    ratios = ", ".join(f"{r['ratio']:.7f}" for r in rows)
    report(5, ok, f"ratios {ratios}; delta_cut to chi_t " + ", ".join(f"{d:.2e}" for d in dists), start)
    assert ok


def test_criterion_06_scaling_inequality():
    start = time.time()
    rng = np.random.default_rng(606)
    margins = []
    for i in range(10):
        p = rng.uniform(0.02, 0.9)
        t, s = np.sort(rng.uniform(p**3 / 6, 1 / 6, 2))
        lhs, rhs = scaling_check(p, t, s, 8, seed=i)
        margins.append(rhs - lhs)
    ok = min(margins) > 1e-6 and time.time() - start < 600
    report(6, ok, f"10 triples, min margin {min(margins):.3e}", start)
    assert ok


def test_criterion_07_cut_norm_oracles():
    start = time.time()
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 11))
        w = rng.dirichlet(np.ones(k))
        b = rng.uniform(-1, 1, (k, k))
        b = 0.5 * (b + b.T)
        worst = max(worst, abs(cut_norm_heuristic(b, w).value - cut_norm_exact(b, w).value))
    axiom = 0.0
    for _ in range(200):
        f, g, h = (random_step_graphon(rng, int(rng.integers(1, 5))) for _ in range(3))
        fg, gf = cut_distance(f, g).value, cut_distance(g, f).value
        fh, gh = cut_distance(f, h).value, cut_distance(g, h).value
        axiom = max(axiom, abs(fg - gf), fh - (fg + gh), cut_distance(f, f).value)
    ok = worst <= 1e-9 and axiom <= 1e-9 and time.time() - start < 120
    report(7, ok, f"max |heuristic - exact| {worst:.2e}, max axiom violation {axiom:.2e}", start)
    assert ok


def test_criterion_08_estimator_ground_truth():
    start = time.time()
    n, p, t = 6, 0.5, 3 / 216
    exact = exact_tail(n, p, t)
    tilt = default_proposal(n, p, t)
    zs = []
    for seed in range(10):
        est = tilted_tail_estimate(n, p, t, tilt, 5000, seed)
        zs.append((est.log_prob_per_n2 - math.log(exact) / n**2) / est.std_error)
    identity = all(np.all(lw == 0.0) for _, _, lw, _ in
                   tilted_samples(n, p, StepGraphon.constant(p), 2000, seed=0))
    ok = max(abs(z) for z in zs) <= 3.0 and identity and time.time() - start < 120
    report(8, ok, f"exact {exact:.8f}, tilt {tilt[0].values[0, 0]:.4f}, max |z| "
                  f"{max(abs(z) for z in zs):.2f}, identity weights exact: {identity}", start)
    assert ok


def test_criterion_09_finite_size_trend():
    start = time.time()
    p, t = 0.5, 0.035
    h = h_p(t, p)
    tilt = candidate_constant(t)
    rates = []
    for n in (32, 48, 64):
        est = tilted_tail_estimate(n, p, t, tilt, 20_000, seed=n)
        rates.append(-est.log_prob_per_n2)
    monotone = rates[0] > rates[1] > rates[2] > h
    rel = abs(rates[-1] - h) / h
    ok = monotone and rel <= 0.25 and time.time() - start < 1800
    report(9, ok, "-log P/n^2 at n=32,48,64: " + ", ".join(f"{r:.5f}" for r in rates)
           + f"; h={h:.5f}; relative gap at n=64 {rel:.1%}", start)
    assert ok


def test_criterion_10_conditional_ordering():
    start = time.time()
    out = []
    p_small, _ = _symmetry_breaking_p()
    assert p_small is not None
    for n, p, t, want in ((32, 0.5, 0.035, "constant"), (48, p_small, 1 / 8, "clique")):
        rows = conditional_structure_experiment(n, p, t, [candidate_constant(t), candidate_clique(t)],
                                                K=8, samples=4000, seed=0,
                                                labels=["constant", "clique"], max_distance_samples=300)
        d = {r["ref_label"]: r["mean_distance"] for r in rows}
        closer = min(d, key=d.get)
        out.append((closer == want, f"n={n} p={p:g}: c_t {d['constant']:.4f} chi_t {d['clique']:.4f} "
                                    f"(ess {rows[0]['ess']:.1f})"))
    ok = all(o for o, _ in out) and time.time() - start < 1800
    report(10, ok, "; ".join(s for _, s in out), start)
    assert ok


def test_criterion_11_inequality_suite():
    start = time.time()
    rng = np.random.default_rng(1111)
    deltas = [0.1 * i for i in range(1, 10)]
    viol = {"mix toward one": 0.0, "mix toward p": 0.0, "path chain": 0.0}
    for _ in range(1000):
        f = random_step_graphon(rng)
        t = triangle_density(f)
        p = rng.uniform(0.01, 0.99)
        rate = ip_graphon(f, p)
        for d in deltas:
            up = triangle_density(mix_toward_one(f, d))
            viol["mix toward one"] = max(viol["mix toward one"], t * (1 - d**3) + d**3 / 6 - up)
            g = mix_toward_p(f, d, p)
            viol["mix toward p"] = max(viol["mix toward p"], ip_graphon(g, p) - (1 - d) * rate,
                                       (1 - d) ** 3 * t - triangle_density(g))
        w, a = f.weights, f.values
        paths_sq = w @ (a @ (w[:, None] * a)) ** 2 @ w
        f_sq = w @ a**2 @ w
        viol["path chain"] = max(viol["path chain"], (6 * t) ** 2 - paths_sq * f_sq,
                                 paths_sq * f_sq - f_sq**3, f_sq**3 - f.edge_density() ** 3)
    count_ok = True
    for _ in range(100):
        n = int(rng.integers(3, 201))
        g = random_graph(rng, n)
        c = triangle_count(g)
        count_ok &= c == _triple_loop(g.adjacency) == round(n**3 * triangle_density(from_graph(g)))
    worst = max(viol.values())
    ok = worst <= 1e-12 and count_ok and time.time() - start < 300
    report(11, ok, ", ".join(f"{k} {v:.1e}" for k, v in viol.items())
           + f"; triangle counts exact: {count_ok}", start)
    assert ok


def _triple_loop(adj: np.ndarray) -> int:
    n = adj.shape[0]
    a = adj.astype(np.int64)
    total = 0
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j]:
                total += int(a[i, j + 1:] @ a[j, j + 1:])
    return total


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
