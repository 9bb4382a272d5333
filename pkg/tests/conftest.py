import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from graphon_ldp.graphon import SimpleGraph, StepGraphon

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_step_graphon(rng: np.random.Generator, k: int | None = None, uniform=False) -> StepGraphon:
    k = int(rng.integers(1, 7)) if k is None else k
    if uniform:
        w = np.full(k, 1.0 / k)
    else:
        w = rng.random(k) + 0.05
        w /= w.sum()
        w[-1] = 1.0 - w[:-1].sum()
    a = rng.random((k, k))
    a = np.triu(a) + np.triu(a, 1).T
    return StepGraphon(w, a)


def random_graph(rng: np.random.Generator, n: int, density: float | None = None) -> SimpleGraph:
    q = rng.random() if density is None else density
    u = np.triu(rng.random((n, n)) < q, 1)
    return SimpleGraph(n, u | u.T)


@st.composite
def step_graphons(draw, max_blocks=6, uniform=False):
    seed = draw(st.integers(0, 2**32 - 1))
    k = draw(st.integers(1, max_blocks))
    return random_step_graphon(np.random.default_rng(seed), k, uniform=uniform)


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_graph(np.random.default_rng(seed), n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
