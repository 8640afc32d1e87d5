import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlgnn.graph import (Graph, OracleBudgetError, is_isomorphic_small, random_graph, wl_equivalent)
from tlgnn.png import (GenerationBudgetError, admissible_swaps, apply_swap, check_png, generate_spng,
                       pair_separation_score, pairs_from_dataset, pairs_sidecar)


def fig1_pair():
    # colours: a, mu -> feature 0; b, v -> feature 1; extra nodes keep the graph connected
    a, b, mu, v, x, y = range(6)
    feats = np.eye(2)[[0, 1, 0, 1, 0, 1]]
    base = [(x, a), (x, mu), (y, b), (y, v)]
    g1 = Graph(6, base + [(a, b), (mu, v)], feats)
    g2 = Graph(6, base + [(a, v), (b, mu)], feats)
    return g1, g2


def test_fig1_witness():
    g1, g2 = fig1_pair()
    w = check_png(g1, g2)
    assert w is not None
    assert set(w.removed) == {(0, 1), (2, 3)} and set(w.added) == {(0, 3), (1, 2)}


def test_identical_graphs_rejected():
    g1, _ = fig1_pair()
    assert check_png(g1, g1) is None


def test_six_edge_difference_rejected():
    g1 = Graph(8, [(0, 1), (2, 3), (4, 5)], np.ones((8, 1)))
    g2 = Graph(8, [(0, 3), (2, 5), (4, 7)], np.ones((8, 1)))
    assert check_png(g1, g2) is None


def test_feature_mismatch_rejected():
    g = Graph(4, [(0, 1), (2, 3)], np.eye(2)[[0, 1, 1, 0]])
    h = Graph(4, [(0, 3), (2, 1)], np.eye(2)[[0, 1, 1, 0]])
    assert check_png(g, h) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 12), st.integers(0, 10**6), st.integers(1, 3))
def test_swaps_certify_and_flip(n, seed, k):
    g = random_graph(n, 0.35, k, seed=seed)
    swaps = admissible_swaps(g)
    if not swaps:
        return
    a, b, i, j = swaps[seed % len(swaps)]
    h = apply_swap(g, a, b, i, j)
    w = check_png(g, h)
    assert w is not None
    back = check_png(h, g)
    assert back is not None and set(back.removed) == set(w.added) and set(back.added) == set(w.removed)
    assert sorted(g.degree(v) for v in range(n)) == sorted(h.degree(v) for v in range(n))
    assert [g.degree(v) for v in range(n)] == [h.degree(v) for v in range(n)]


def test_spng_default_certified():
    ds, pairs = generate_spng(20, seed=3)
    assert len(ds) == 40 and ds.class_count == 2
    for k, p in enumerate(pairs):
        assert ds[2 * k] is p.g1 and ds[2 * k + 1] is p.g2
        assert (p.g1.graph_label, p.g2.graph_label) == (0, 1)
        assert check_png(p.g1, p.g2) == p.swap_witness
        assert p.g1.node_count == p.g2.node_count and p.g1.edge_count == p.g2.edge_count
        assert np.array_equal(p.g1.node_features, p.g2.node_features)
        assert len(p.g1.edge_set() ^ p.g2.edge_set()) == 4
        assert p.certified and wl_equivalent(p.g1, p.g2) and not is_isomorphic_small(p.g1, p.g2)


def test_spng_deterministic():
    a, _ = generate_spng(5, seed=11)
    b, _ = generate_spng(5, seed=11)
    c, _ = generate_spng(5, seed=12)
    assert a.graphs == b.graphs and a.graphs != c.graphs


def test_spng_budget_and_oracle_limits():
    with pytest.raises(OracleBudgetError):
        generate_spng(1, n=20)
    with pytest.raises(GenerationBudgetError) as err:
        generate_spng(3, n=4, substrate="er", edge_prob=0.0, max_attempts=5)
    assert err.value.rejected == {"no_admissible_swap": 5}


def test_sidecar_roundtrip():
    import json

    ds, pairs = generate_spng(3, seed=1)
    back = pairs_from_dataset(ds, json.loads(pairs_sidecar(pairs, {"seed": 1})))
    assert [p.swap_witness for p in back] == [p.swap_witness for p in pairs]


def test_separation_scores():
    _, pairs = generate_spng(3, seed=2)
    p = pairs[0]
    assert pair_separation_score(lambda g: np.array([1.0, 2.0]), p) == 0.0
    assert pair_separation_score(lambda g: g.node_features.sum(axis=0), p) == 0.0
    assert pair_separation_score(lambda g: np.array([float(g.graph_label)]), p) == 1.0
    with pytest.raises(ValueError):
        pair_separation_score(lambda g: np.zeros(g.graph_label + 1), p)
