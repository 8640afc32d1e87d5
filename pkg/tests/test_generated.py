import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlgnn.generated import (build_generated_graph, generated_json, supernode_features, transform_aggregate,
                             transform_aggregate_max)
from tlgnn.graph import Graph, cycle_graph, random_graph
from tlgnn.subgraphs import SubgraphRecord, enumerate_subgraphs


def fig3_records():
    return [SubgraphRecord.make("circuit", [0, 1, 2, 3, 4, 5]), SubgraphRecord.make("path", [5, 6, 7, 8]),
            SubgraphRecord.make("tree", [9, 10, 11, 12])]


def fig3_graph():
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10), (9, 11), (9, 12)]
    return Graph(13, edges, np.ones((13, 1)))


def test_fig3_features():
    gg, t = build_generated_graph(fig3_graph(), fig3_records())
    assert gg.super_features.tolist() == [[6, 2], [4, 1], [4, 0]]
    assert gg.super_edges == ((0, 1),)
    assert t.shape == (13, 3)
    assert t.membership[5] == (0, 1) and t.membership[9] == (2,)


def test_disjoint_records_unlinked():
    recs = [SubgraphRecord.make("path", [0, 1]), SubgraphRecord.make("path", [2, 3])]
    gg, _ = build_generated_graph(Graph(4, [(0, 1), (2, 3)], np.ones((4, 1))), recs)
    assert gg.super_edges == ()


def test_empty_records():
    gg, t = build_generated_graph(cycle_graph(5), [])
    assert gg.supernode_count == 0 and t.shape == (5, 0) and t.dense().shape == (5, 0)
    assert transform_aggregate(t, np.zeros((0, 3))).shape == (5, 3)


def test_out_of_range_record():
    with pytest.raises(ValueError):
        build_generated_graph(cycle_graph(3), [SubgraphRecord.make("path", [1, 3])])


def test_one_hot_types():
    f = supernode_features(fig3_records(), "type_onehot")
    assert f.tolist() == [[6, 0, 0, 1], [4, 0, 1, 0], [4, 1, 0, 0]]


def test_categorical_encoding():
    # fig3 records: 6-circuit, 4-path, 4-tree; sizes clipped at 5
    f = supernode_features(fig3_records(), "categorical", max_size=5)
    assert f.shape == (3, 16)
    assert np.flatnonzero(f[0]).tolist() == [2 * 5 + 4, 15] and f[0, 15] == 6
    assert np.flatnonzero(f[1]).tolist() == [1 * 5 + 3, 15]
    assert np.flatnonzero(f[2]).tolist() == [0 * 5 + 3, 15]
    # summed rows count each (type, size) category
    assert f[:, :15].sum(axis=0).sum() == 3


def test_unknown_encoding():
    with pytest.raises(ValueError):
        supernode_features(fig3_records(), "bogus")
    with pytest.raises(ValueError):
        supernode_features(fig3_records(), "categorical", max_size=0)


def test_aggregate_examples():
    recs = [SubgraphRecord.make("path", p) for p in ([0, 1], [1, 2], [2, 3], [1, 4])]
    g = Graph(6, [(0, 1), (1, 2), (2, 3), (1, 4)], np.ones((6, 1)))
    _, t = build_generated_graph(g, recs)
    h = np.array([[1.0, 5.0], [3.0, 2.0], [7.0, 7.0], [0.5, 0.5]])
    s = transform_aggregate(t, h)
    assert np.array_equal(s[1], h[0] + h[1] + h[3])
    assert np.array_equal(s[5], [0, 0])
    m = transform_aggregate_max(t, h)
    assert np.array_equal(m[0], h[0])
    assert np.array_equal(transform_aggregate_max(t, h)[1], [3, 5])
    assert np.array_equal(m[5], [0, 0])
    with pytest.raises(ValueError):
        transform_aggregate(t, h[:2])
    with pytest.raises(ValueError):
        transform_aggregate_max(t, h[:2])


def test_single_supernode_all_members():
    g = cycle_graph(4)
    _, t = build_generated_graph(g, [SubgraphRecord.make("circuit", [0, 1, 2, 3])])
    h = np.array([[2.5, -1.0]])
    assert np.array_equal(transform_aggregate(t, h), np.repeat(h, 4, axis=0))
    assert np.array_equal(transform_aggregate(t, h), t.dense() @ h)


graphs = st.builds(lambda n, p, s: random_graph(n, p, seed=s),
                   st.integers(2, 11), st.sampled_from([0.2, 0.35, 0.5]), st.integers(0, 10**6))


@settings(max_examples=40, deadline=None)
@given(graphs, st.integers(0, 10**6))
def test_structure_properties(g, seed):
    recs = enumerate_subgraphs(g, 2)
    gg, t = build_generated_graph(g, recs)
    dense = t.dense()
    assert np.array_equal(dense.sum(axis=0), gg.super_features[:, 0])
    assert np.array_equal(t.to_sparse().toarray(), dense)
    edges = set(gg.super_edges)
    for a in range(len(recs)):
        for b in range(a + 1, len(recs)):
            assert ((a, b) in edges) == bool(set(recs[a].nodes) & set(recs[b].nodes))
    assert all(a < b for a, b in edges)
    adj = gg.neighbors_csr().toarray()
    assert np.array_equal(adj, adj.T) and not adj.diagonal().any()
    # appending a record keeps every existing super-edge
    if recs:
        gg2, _ = build_generated_graph(g, recs + [recs[0]])
        assert edges <= set(gg2.super_edges)
    h = np.random.default_rng(seed).integers(-4, 5, size=(len(recs), 3)).astype(float)
    assert np.array_equal(transform_aggregate(t, h), dense @ h)


def test_json_layout():
    gg, t = build_generated_graph(fig3_graph(), fig3_records())
    import json

    d = json.loads(generated_json(gg, t))
    assert d["m"] == 3 and d["edges"] == [[0, 1]] and d["features"][0] == [6.0, 2.0]
    assert d["transform"]["rows"][9] == [2]
