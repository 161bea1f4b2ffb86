import json

import numpy as np
import pytest

from netfuse import (
    FusionWeights,
    MultiplexSeries,
    MultiplexSnapshot,
    NodeRegistry,
    ValidationError,
    WeightedGraph,
    active_nodes,
    coexist_restrict,
    cosine_similarity_matrix,
    fuse,
    normalized_degrees,
)
from netfuse.graphs import restrict, series_from_dict, series_to_dict


def reg(*labels):
    return NodeRegistry.from_labels(labels)


def graph(registry, *triples):
    return WeightedGraph.from_label_edges(registry, list(triples))


def snapshot(registry, t, raw_layers, add_layers):
    return MultiplexSnapshot(
        t=t,
        raw=tuple(graph(registry, *layer) for layer in raw_layers),
        add=tuple(graph(registry, *layer) for layer in add_layers),
    )


# --- registry and graph basics ---------------------------------------------


def test_registry_bijection():
    r = reg("a", "b", "c")
    assert len(r) == 3
    assert r.id_of("b") == 1
    assert r.label_of(2) == "c"
    with pytest.raises(ValidationError):
        NodeRegistry.from_labels(["a", "a"])


def test_graph_rejects_self_loops_and_negative_weights():
    r = reg("a", "b")
    with pytest.raises(ValidationError):
        graph(r, ("a", "a", 1.0))
    with pytest.raises(ValidationError):
        WeightedGraph(r, {(0, 1): -1.0})


def test_graph_symmetric_storage_drops_zeros():
    r = reg("a", "b", "c")
    g = WeightedGraph(r, {(1, 0): 2.0, (0, 2): 0.0})
    assert g.weight(0, 1) == 2.0
    assert g.weight(1, 0) == 2.0
    assert g.weight(0, 2) == 0.0
    assert g.edge_count() == 1


# --- fuse --------------------------------------------------------------------


def test_fuse_single_layer_zero_add_erases_add_layer():
    r = reg("a", "b")
    snap = snapshot(r, 1, [[("a", "b", 2.0)]], [[("a", "b", 5.0)]])
    fused = fuse(snap, FusionWeights((1.0,), 0.0))
    assert fused.weight(0, 1) == 2.0


def test_fuse_two_layers_hand_value():
    # W = (1, 2); edge = 1*1 + 2*(1 + 0.5*2) = 5
    r = reg("a", "b")
    snap = snapshot(
        r, 1,
        [[("a", "b", 1.0)], [("a", "b", 1.0)]],
        [[], [("a", "b", 2.0)]],
    )
    fused = fuse(snap, FusionWeights((1.0, 1.0), 0.5))
    assert fused.weight(0, 1) == pytest.approx(5.0)


def test_fuse_scaled_weights_scale_every_edge():
    rng = np.random.default_rng(7)
    r = reg(*[f"n{i}" for i in range(6)])
    raw = [[("n0", "n1", 1.0), ("n2", "n3", 2.5)], [("n1", "n2", 3.0)]]
    add = [[("n0", "n1", 1.0)], [("n1", "n2", 0.5), ("n4", "n5", 2.0)]]
    snap = snapshot(r, 1, raw, add)
    w = (1.0, float(rng.uniform(0, 2)))
    w_add = float(rng.uniform(0, 1))
    base = fuse(snap, FusionWeights(w, w_add))
    c = 3.7
    scaled = fuse(snap, FusionWeights.unchecked(tuple(c * x for x in w), w_add))
    for i, j, wt in base.edges():
        assert scaled.weight(i, j) == pytest.approx(c * wt, rel=1e-12)


def test_fuse_layer_count_mismatch_errors():
    r = reg("a", "b")
    snap = snapshot(r, 1, [[("a", "b", 1.0)]], [[]])
    with pytest.raises(ValidationError):
        fuse(snap, FusionWeights((1.0, 1.0), 0.0))


def test_fuse_linear_in_each_layer():
    rng = np.random.default_rng(11)
    r = reg(*[f"n{i}" for i in range(5)])
    raw1 = [("n0", "n1", 2.0), ("n1", "n2", 1.0)]
    raw2 = [("n2", "n3", 4.0), ("n0", "n4", 1.5)]
    add1 = [("n0", "n1", 1.0)]
    add2 = [("n2", "n3", 2.0)]
    w_add = 0.25
    snap = snapshot(r, 1, [raw1, raw2], [add1, add2])
    doubled = snapshot(
        r, 1,
        [raw1, [(u, v, 2 * w) for u, v, w in raw2]],
        [add1, [(u, v, 2 * w) for u, v, w in add2]],
    )
    weights = FusionWeights((1.0, float(rng.uniform(0.1, 2))), w_add)
    W2 = 1.0 + weights.w[1]
    base = fuse(snap, weights)
    out = fuse(doubled, weights)
    # doubling layer 2 doubles exactly its contribution per edge
    for (i, j), w in base.edge_dict().items():
        layer2 = W2 * (
            snap.raw[1].weight(i, j) + w_add * snap.add[1].weight(i, j)
        )
        assert out.weight(i, j) == pytest.approx(w + layer2, rel=1e-12)


# --- active nodes and restriction -------------------------------------------


def test_active_nodes_empty_graph():
    assert active_nodes(WeightedGraph.empty(reg("a", "b", "c"))) == set()


def test_active_nodes_single_edge():
    r = reg("a", "b", "c")
    assert active_nodes(graph(r, ("a", "b", 1.0))) == {0, 1}


def test_active_nodes_triangle():
    r = reg("a", "b", "c")
    g = graph(r, ("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0))
    assert active_nodes(g) == {0, 1, 2}


def test_coexist_disjoint_active_sets():
    r = reg("a", "b", "c", "d")
    g1 = graph(r, ("a", "b", 1.0))
    g2 = graph(r, ("c", "d", 1.0))
    ids, r1, r2 = coexist_restrict(g1, g2)
    assert ids == ()
    assert r1.edge_count() == 0 and r2.edge_count() == 0


def test_coexist_identical_graphs():
    r = reg("a", "b", "c")
    g = graph(r, ("a", "b", 2.0), ("b", "c", 1.0))
    ids, r1, r2 = coexist_restrict(g, g)
    assert ids == (0, 1, 2)
    assert np.allclose(r1.dense(), g.dense())
    assert np.allclose(r2.dense(), g.dense())


def test_coexist_shared_single_node_has_no_edges():
    r = reg("a", "b", "c")
    g1 = graph(r, ("a", "b", 1.0))
    g2 = graph(r, ("b", "c", 1.0))
    ids, r1, r2 = coexist_restrict(g1, g2)
    assert ids == (1,)
    assert r1.edge_count() == 0 and r2.edge_count() == 0


def test_restrict_keeps_inner_edges_only():
    r = reg("a", "b", "c", "d")
    g = graph(r, ("a", "b", 1.0), ("b", "c", 2.0), ("c", "d", 3.0))
    sub = restrict(g, [1, 2])
    assert sub.registry.labels == ("b", "c")
    assert sub.weight(0, 1) == 2.0
    assert sub.edge_count() == 1


# --- cosine similarity -------------------------------------------------------


def test_cosine_identical_rows():
    a = np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0], [1.0, 0.0, 0.0]])
    s = cosine_similarity_matrix(a)
    assert s[0, 1] == pytest.approx(1.0)


def test_cosine_disjoint_supports():
    a = np.array([[0.0, 0.0, 2.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    s = cosine_similarity_matrix(a)
    assert s[0, 1] == pytest.approx(0.0)


def test_cosine_hand_value():
    a = np.array([[1.0, 0.0, 2.0], [2.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    s = cosine_similarity_matrix(a)
    assert s[0, 1] == pytest.approx(0.8)


def test_cosine_zero_row_convention():
    a = np.array([[0.0, 0.0], [0.0, 0.0]])
    s = cosine_similarity_matrix(a)
    assert np.all(s == 0.0)
    b = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    s = cosine_similarity_matrix(b)
    assert s[2, 2] == 0.0
    assert s[0, 2] == 0.0
    assert s[0, 0] == pytest.approx(1.0)


def test_cosine_symmetric_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.integers(2, 7)
        a = np.triu(rng.random((m, m)) * (rng.random((m, m)) < 0.6), k=1)
        a = a + a.T
        s = cosine_similarity_matrix(a)
        assert np.allclose(s, s.T)
        assert np.all(s >= -1e-12) and np.all(s <= 1 + 1e-12)


# --- normalized degrees ------------------------------------------------------


def test_degrees_single_edge():
    a = np.array([[0.0, 3.0], [3.0, 0.0]])
    assert np.allclose(normalized_degrees(a), [0.5, 0.5])


def test_degrees_star():
    a = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert np.allclose(normalized_degrees(a), [0.5, 0.25, 0.25])


def test_degrees_scale_invariant_and_sum_to_one():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = rng.integers(2, 8)
        a = np.triu(rng.random((m, m)), k=1)
        a = a + a.T
        d = normalized_degrees(a)
        assert abs(d.sum() - 1.0) < 1e-12
        assert np.allclose(d, normalized_degrees(a * 17.3), atol=1e-12)
    assert np.all(normalized_degrees(np.zeros((3, 3))) == 0.0)


def test_restriction_features_match_for_identical_snapshots():
    rng = np.random.default_rng(9)
    r = reg(*[f"n{i}" for i in range(8)])
    triples = [
        (f"n{i}", f"n{j}", float(rng.uniform(0.5, 3)))
        for i in range(8)
        for j in range(i + 1, 8)
        if rng.random() < 0.4
    ]
    layers = [triples[: len(triples) // 2], triples[len(triples) // 2 :]]
    adds = [[], [(u, v, 1.0) for u, v, _ in triples[:3]]]
    s1 = snapshot(r, 1, layers, adds)
    s2 = snapshot(r, 2, layers, adds)
    w = FusionWeights((1.0, 0.7), 0.3)
    ids, g1, g2 = coexist_restrict(fuse(s1, w), fuse(s2, w))
    assert np.allclose(
        cosine_similarity_matrix(g1.dense()), cosine_similarity_matrix(g2.dense())
    )
    assert np.allclose(
        normalized_degrees(g1.dense()), normalized_degrees(g2.dense())
    )


def test_cosine_and_degrees_scale_invariance_via_fused_graph():
    rng = np.random.default_rng(13)
    r = reg(*[f"n{i}" for i in range(6)])
    triples = [
        (f"n{i}", f"n{j}", float(rng.uniform(0.5, 3)))
        for i in range(6)
        for j in range(i + 1, 6)
        if rng.random() < 0.5
    ]
    g = WeightedGraph.from_label_edges(r, triples)
    a = g.dense()
    for c in (0.1, 2.0, 10.0):
        assert np.allclose(
            cosine_similarity_matrix(a), cosine_similarity_matrix(c * a), atol=1e-12
        )
        assert np.allclose(
            normalized_degrees(a), normalized_degrees(c * a), atol=1e-12
        )


# --- fusion weights and series types ----------------------------------------


def test_fusion_weights_validation():
    with pytest.raises(ValidationError):
        FusionWeights((2.0,), 0.0)
    with pytest.raises(ValidationError):
        FusionWeights((1.0, -0.1), 0.0)
    with pytest.raises(ValidationError):
        FusionWeights((1.0,), 1.5)
    w = FusionWeights((1.0, 0.5, 0.0), 0.3)
    assert np.allclose(w.cumulative(), [1.0, 1.5, 1.5])


def test_series_requires_two_steps_and_increasing_labels():
    r = reg("a", "b")
    s1 = snapshot(r, 1, [[("a", "b", 1.0)]], [[]])
    s2 = snapshot(r, 1, [[("a", "b", 2.0)]], [[]])
    with pytest.raises(ValidationError):
        MultiplexSeries((s1,))
    with pytest.raises(ValidationError):
        MultiplexSeries((s1, s2))


def test_series_json_roundtrip(tmp_path):
    r = reg("a", "b", "c")
    s1 = snapshot(r, 1998, [[("a", "b", 1.0)], [("b", "c", 2.0)]], [[], [("b", "c", 1.0)]])
    s2 = snapshot(r, 1999, [[("a", "c", 3.0)], []], [[], []])
    series = MultiplexSeries((s1, s2))
    data = series_to_dict(series)
    back = series_from_dict(json.loads(json.dumps(data)))
    assert back.T == 2
    assert back.registry.labels == ("a", "b", "c")
    assert back.snapshots[0].raw[1].weight(1, 2) == 2.0
    assert back.snapshots[1].raw[0].weight(0, 2) == 3.0
    assert back.snapshots[0].add[1].weight(1, 2) == 1.0
