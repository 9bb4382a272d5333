import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphon_ldp import StepGraphon, triangle_density
from graphon_ldp.cut import delta_cut
from graphon_ldp.errors import DomainError
from graphon_ldp.rate import classify_phase, h_p, ip_graphon, Phase
from graphon_ldp.solver import (
    Method, _fixed_point_at, candidate_clique, candidate_constant, distinct_optima,
    scaling_check, small_p_limit_check, solve_phi, tighten,
)

# mpmath, 30 digits: blockwise entropy of the two closed-form candidates
I_CONST_001_EIGHTH = 1.93956880558857511613
I_CLIQUE_001_EIGHTH = 1.90161909856375019313
# mpmath: I_{1e-3}(chi_{1/48}) / log(1000)
CLIQUE_RATIO_1E3 = 0.125054313971752211
CUBE_ROOT_THREE_QUARTERS = 0.90856029641606982945
# brute-force minimum over a 401^3 grid of 2-block equal-weight graphons at
# p = 0.1, t = 0.05 (values a, b, c in [0, 1] step 1/400, feasible cells only)
GRID_MIN_K2 = 0.4708608217894687


def test_candidate_constant_examples():
    assert candidate_constant(1 / 48).values[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert candidate_constant(0.0).values[0, 0] == 0.0
    c = candidate_constant(1 / 8)
    assert c.values[0, 0] == pytest.approx(CUBE_ROOT_THREE_QUARTERS, abs=1e-15)
    assert triangle_density(c) == pytest.approx(1 / 8, abs=1e-15)


def test_candidate_clique_examples():
    c = candidate_clique(1 / 48)
    assert c.weights[0] == pytest.approx(0.5, abs=1e-15)
    assert np.array_equal(c.values, [[1.0, 0.0], [0.0, 0.0]])
    near = candidate_clique(1 / 6 - 1e-12)
    assert near.weights[0] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("t", [-0.1, 1 / 6, 0.2])
def test_candidates_reject_bad_t(t):
    with pytest.raises(DomainError):
        candidate_constant(t)
    with pytest.raises(DomainError):
        candidate_clique(t)


@given(st.floats(1e-4, 1 / 6 - 1e-6))
@settings(max_examples=50)
def test_candidates_hit_t_exactly(t):
    assert triangle_density(candidate_constant(t)) == pytest.approx(t, rel=1e-12)
    assert triangle_density(candidate_clique(t)) == pytest.approx(t, rel=1e-12)


def test_clique_beats_constant_at_small_p():
    ic = ip_graphon(candidate_constant(1 / 8), 0.01)
    ix = ip_graphon(candidate_clique(1 / 8), 0.01)
    assert ic == pytest.approx(I_CONST_001_EIGHTH, rel=1e-12)
    assert ix == pytest.approx(I_CLIQUE_001_EIGHTH, rel=1e-12)
    assert ix < ic


def test_trivial_phase_short_circuit():
    r = solve_phi(0.5, 0.01, 8)
    assert r.objective == 0.0
    assert np.all(r.optimizer.values == 0.5)
    assert r.converged
    assert solve_phi(0.3, 0.0).objective == 0.0


@pytest.mark.parametrize("p,t,k", [(0.5, 1 / 6, 8), (0.0, 0.1, 8), (1.0, 0.1, 8), (0.5, 0.1, 0), (0.5, 0.1, 65)])
def test_solve_phi_domain(p, t, k):
    with pytest.raises(DomainError):
        solve_phi(p, t, k)


@pytest.mark.parametrize("p,t", [(0.5, 0.1), (0.2, 0.16), (0.35, 0.03)])
def test_rs_points_match_constant(p, t):
    assert classify_phase(p, t).phase is Phase.REPLICA_SYMMETRIC
    r = solve_phi(p, t, 8)
    assert abs(r.objective - h_p(t, p)) <= 1e-4
    assert delta_cut(r.optimizer, candidate_constant(t)).value <= 1e-3


def test_symmetry_breaking_at_small_p():
    r = solve_phi(0.01, 1 / 8, 16)
    assert r.objective < I_CONST_001_EIGHTH - 1e-6
    assert np.ptp(r.optimizer.values) > 0.1
    assert r.achieved_t >= 1 / 8 - 1e-8


@pytest.mark.parametrize("p,t", [(0.5, 0.1), (0.1, 0.05), (0.01, 0.04), (0.01, 1 / 8), (0.3, 0.16)])
def test_solution_invariants(p, t):
    r = solve_phi(p, t, 8)
    assert r.achieved_t >= t - 1e-8
    assert abs(r.achieved_t - t) <= 1e-6
    assert r.objective == pytest.approx(ip_graphon(r.optimizer, p), abs=1e-12)
    assert r.achieved_t == pytest.approx(triangle_density(r.optimizer), abs=1e-15)
    bound = min(ip_graphon(candidate_constant(t), p), ip_graphon(candidate_clique(t), p))
    assert r.objective <= bound + 1e-9
    labels = [label for label, _ in r.multistart_log]
    assert labels[:2] == ["candidate_constant", "candidate_clique"]
    starts = {lab.split("/")[0] for lab in labels[2:] if not lab.endswith("/pgw")}
    assert starts == {"constant", "clique", "bipartite"} | {f"random{i}" for i in range(8)}
    assert any(lab.endswith("/pgw") for lab in labels)


def test_two_block_grid_oracle():
    r = solve_phi(0.1, 0.05, 2)
    assert r.objective <= GRID_MIN_K2 + 1e-6
    assert GRID_MIN_K2 <= r.objective + 5e-3


def test_fixed_point_values_stay_open():
    rng = np.random.default_rng(3)
    w = np.full(6, 1 / 6)
    for beta in (0.0, 1.0, 20.0, 200.0):
        a0 = rng.uniform(0.01, 0.99, (6, 6))
        a, _, _ = _fixed_point_at(beta, 0.5 * (a0 + a0.T), w, 0.05)
        assert np.all(a > 0.0) and np.all(a < 1.0)
        assert np.allclose(a, a.T)


def test_gradient_stage_objective_decreases():
    r = solve_phi(0.1, 0.05, 4, method="gradient", n_random=2)
    seen = 0
    for branch in r.branches:
        for trace in branch.history:
            seen += 1
            assert np.all(np.diff(trace) <= 1e-12)
    assert seen > 0
    assert all(b.method in (Method.PROJECTED_GRADIENT, Method.CANDIDATE_CONSTANT, Method.CANDIDATE_CLIQUE)
               for b in r.branches)


def test_fixed_point_method_only():
    r = solve_phi(0.5, 0.1, 4, method="fixed-point")
    assert r.method in (Method.FIXED_POINT, Method.CANDIDATE_CONSTANT, Method.CANDIDATE_CLIQUE)
    assert r.objective == pytest.approx(h_p(0.1, 0.5), abs=1e-8)


def test_monotone_in_t():
    p = 0.05
    ts = np.linspace(1.01 * p**3 / 6, 0.16, 50)
    values = [solve_phi(p, t, 4, n_random=2).objective for t in ts]
    assert np.all(np.diff(values) >= -1e-8)


def test_continuity_on_nested_grids():
    p, t = 0.3, 0.08
    base = solve_phi(p, t, 4, n_random=2).objective
    gaps = [abs(solve_phi(p, t + d, 4, n_random=2).objective - base) for d in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


@pytest.mark.parametrize("p,t", [(0.1, 0.05), (0.01, 1 / 8)])
def test_refinement_does_not_hurt(p, t):
    coarse = solve_phi(p, t, 4, n_random=2)
    fine = solve_phi(p, t, 8, n_random=2, extra_starts=(coarse.optimizer,))
    assert fine.objective <= coarse.objective + 1e-8


def test_tighten_hits_target():
    f = StepGraphon([0.5, 0.5], [[0.9, 0.2], [0.2, 0.7]])
    for t in (0.02, 0.09):
        g = tighten(f, 0.1, t)
        assert abs(triangle_density(g) - t) <= 1e-9


def test_scaling_examples():
    lhs, rhs = scaling_check(0.3, 0.05, 0.10, 8)
    assert lhs < rhs - 1e-6
    lhs, rhs = scaling_check(0.5, 0.05, 0.12, 8)
    assert lhs < rhs - 1e-6


@pytest.mark.parametrize("t,s", [(0.05, 0.05), (0.1, 0.05), (0.001, 0.05), (0.05, 1 / 6)])
def test_scaling_rejects_bad_order(t, s):
    with pytest.raises(DomainError):
        scaling_check(0.3, t, s)


def test_small_p_targets():
    assert (1 / 8) ** (2 / 3) / 2 == pytest.approx(0.125, abs=1e-15)
    assert (3 / 4) ** (2 / 3) / 2 == pytest.approx(0.412740906111828335, abs=1e-15)


def test_small_p_ratio_at_1e3():
    rows = small_p_limit_check(1 / 48, [1e-3], K=8)
    assert abs(rows[0]["ratio"] - 0.125) <= 0.05
    assert rows[0]["ratio"] <= CLIQUE_RATIO_1E3 + 1e-9
    assert rows[0]["target"] == pytest.approx(0.125)


def test_distinct_optima_reports_at_least_best():
    r = solve_phi(0.01, 1 / 8, 8, n_random=2)
    kept = distinct_optima(r)
    assert len(kept) >= 1
    assert min(b.objective for b in kept) == pytest.approx(r.objective)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert delta_cut(a.graphon, b.graphon, blocks=8).value > 1e-3


def test_rs_point_has_unique_optimum():
    r = solve_phi(0.5, 0.1, 4, n_random=2)
    assert len(distinct_optima(r)) == 1


def test_threads_do_not_change_result():
    a = solve_phi(0.1, 0.05, 4, n_random=2, threads=1)
    b = solve_phi(0.1, 0.05, 4, n_random=2, threads=4)
    assert a.objective == b.objective
    assert np.array_equal(a.optimizer.values, b.optimizer.values)
    assert a.multistart_log == b.multistart_log


def test_result_json_roundtrip():
    r = solve_phi(0.1, 0.05, 2, n_random=1)
    d = r.to_dict()
    g = StepGraphon.from_dict(d["optimizer"])
    assert ip_graphon(g, 0.1) == pytest.approx(r.objective, abs=1e-12)
    assert math.isfinite(d["objective"])


def test_free_weight_branch_finds_small_hub():
    # just above p^3/6 the cheapest excess triangles come from a block of tiny
    # mass joined to almost everything; equal blocks of mass 1/8 cannot do this
    p, t = 0.01, 8e-7
    with_weights = solve_phi(p, t, 8, n_random=2)
    equal_only = solve_phi(p, t, 8, n_random=2, free_weights=False)
    assert with_weights.objective < h_p(t, p) / 1.5
    assert equal_only.objective == pytest.approx(h_p(t, p), rel=1e-9)
    assert with_weights.optimizer.weights.min() < 1e-3
    assert with_weights.start_label.endswith("/pgw")
