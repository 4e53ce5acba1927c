import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softmask.flow import FlowNetwork, max_flow


def brute_min_cut(net: FlowNetwork) -> float:
    inner = [v for v in range(net.n_nodes) if v not in (net.source, net.sink)]
    best = np.inf
    for bits in itertools.product([0, 1], repeat=len(inner)):
        side = {net.source} | {v for v, b in zip(inner, bits) if b}
        best = min(best, net.cut_capacity(side))
    return best


@st.composite
def networks(draw, max_inner=6):
    n_inner = draw(st.integers(0, max_inner))
    n = n_inner + 2
    n_edges = draw(st.integers(0, 3 * n))
    edges = []
    for _ in range(n_edges):
        u = draw(st.integers(0, n - 1))
        v = draw(st.integers(0, n - 1).filter(lambda x: x != u))
        edges.append((u, v, float(draw(st.integers(0, 10)))))
    return FlowNetwork(n, 0, 1, edges)


def test_worked_example():
    s, t, a, b = 0, 1, 2, 3
    net = FlowNetwork(4, s, t, [(s, a, 3), (s, b, 1), (a, t, 2), (b, t, 4), (a, b, 1), (b, a, 1)])
    flow, side = max_flow(net)
    assert flow == 4
    assert net.cut_capacity(side) == 4
    # the four s-t cuts by hand: {s}=4, {s,a}=4, {s,b}=8, {s,a,b}=6
    assert brute_min_cut(net) == 4


def test_single_edge():
    assert max_flow(FlowNetwork(2, 0, 1, [(0, 1, 7)]))[0] == 7


def test_disconnected():
    net = FlowNetwork(4, 0, 1, [(0, 2, 5), (3, 1, 5)])
    flow, side = max_flow(net)
    assert flow == 0
    assert side == {0, 2}


def test_invalid_networks():
    with pytest.raises(ValueError):
        FlowNetwork(2, 0, 0)
    with pytest.raises(ValueError):
        FlowNetwork(2, 0, 1, [(0, 1, -1)])
    with pytest.raises(ValueError):
        FlowNetwork(2, 0, 1, [(0, 1, float("inf"))])
    with pytest.raises(ValueError):
        FlowNetwork(2, 0, 1, [(0, 5, 1)])


@given(networks())
def test_max_flow_equals_brute_force_min_cut(net):
    flow, side = max_flow(net)
    assert net.source in side and net.sink not in side
    assert flow == pytest.approx(net.cut_capacity(side), abs=1e-9)
    assert flow == pytest.approx(brute_min_cut(net), abs=1e-9)


def test_real_valued_capacities(rng):
    for _ in range(20):
        n = 7
        edges = [(int(u), int(v), float(c)) for u, v, c in zip(rng.integers(0, n, 25), rng.integers(0, n, 25), rng.random(25)) if u != v]
        net = FlowNetwork(n, 0, 1, edges)
        flow, side = max_flow(net)
        assert flow == pytest.approx(brute_min_cut(net), rel=1e-12, abs=1e-12)
        assert flow == pytest.approx(net.cut_capacity(side), rel=1e-12, abs=1e-12)
