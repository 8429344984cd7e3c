import numpy as np
import pytest

from dcfeas.network import Edge, Network, build_kirchhoff
from dcfeas.powerflow import make_core


def core_from_edges(n_loads, n_sources, edges, V_S):
    net = Network(n_loads, n_sources, tuple(Edge(a, b, g) for a, b, g in edges), V_S)
    return make_core(build_kirchhoff(net), net.source_voltages)


@pytest.fixture
def one_load():
    """Single load behind a unit conductance from a unit source."""
    return core_from_edges(1, 1, [(0, 1, 1.0)], [1.0])


@pytest.fixture
def two_load():
    """Triangle with two loads and one unit source; V* = (1, 1)."""
    return core_from_edges(2, 1, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], [1.0])


def random_network(rng, n, m=None):
    """Random grid with a connected load subgraph, conductances in [0.1, 10] and source voltages in [0.5, 2]."""
    if m is None:
        m = int(rng.integers(1, 3))
    N = n + m
    edges = {}
    for k in range(1, n):
        edges[(int(rng.integers(0, k)), k)] = float(rng.uniform(0.1, 10.0))
    for s in range(n, N):
        edges[(int(rng.integers(0, n)), s)] = float(rng.uniform(0.1, 10.0))
    for a in range(N):
        for b in range(a + 1, N):
            if (a, b) not in edges and rng.random() < 0.3:
                edges[(a, b)] = float(rng.uniform(0.1, 10.0))
    V_S = rng.uniform(0.5, 2.0, size=m)
    return Network(n, m, tuple(Edge(a, b, g) for (a, b), g in edges.items()), V_S)


def random_core(rng, n, m=None):
    net = random_network(rng, n, m)
    return make_core(build_kirchhoff(net), net.source_voltages)


def random_demand(rng, core, nonneg):
    """Demand scaled against P_max so the corpus straddles the boundary."""
    u = rng.uniform(0.0, 1.0, core.n) if nonneg else rng.uniform(-1.0, 1.0, core.n)
    return u * core.P_max * rng.uniform(0.2, 3.0)


def corpus(seed, count):
    """Seeded list of ``(core, P)`` pairs over n in {1, 2, 3}, half of them nonnegative."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        core = random_core(rng, int(rng.integers(1, 4)))
        out.append((core, random_demand(rng, core, nonneg=bool(k % 2))))
    return out
