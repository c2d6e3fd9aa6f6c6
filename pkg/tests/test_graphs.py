import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igad.errors import DataError, UsageError
from igad.graphs import (AttributedGraph, InjectionSpec, apply_masks,
                         canonicalize_edges, inject_anomalies, load_bundle,
                         load_graph, make_masks, read_manifest, save_bundle,
                         save_graph)


def toy_graph(n=20, d=5, extra_edges=25, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    # ring plus random chords: connected, no accidental duplicates after canon
    ring = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    chords = rng.integers(0, n, size=(extra_edges, 2))
    return AttributedGraph.build(X, np.concatenate([ring, chords]), labels)


def test_canonicalize_drops_loops_and_dups():
    edges = np.array([[3, 1], [1, 3], [2, 2], [0, 1], [1, 0]])
    canon, loops, dups = canonicalize_edges(edges, 5)
    assert loops == 1 and dups == 2
    assert np.array_equal(canon, [[0, 1], [1, 3]])


def test_canonicalize_rejects_out_of_range():
    with pytest.raises(DataError):
        canonicalize_edges(np.array([[0, 9]]), 5)


def test_build_validates_and_orders():
    g = toy_graph()
    assert (g.edges[:, 0] < g.edges[:, 1]).all()
    A = g.adjacency()
    assert np.array_equal(A, A.T)
    assert not A.diagonal().any()
    assert A.sum() == 2 * g.num_edges


def test_non_canonical_edges_rejected_by_constructor():
    X = np.zeros((3, 2))
    with pytest.raises(DataError):
        AttributedGraph(features=X, edges=np.array([[1, 0]]))
    with pytest.raises(DataError):
        AttributedGraph(features=X, edges=np.array([[0, 1], [0, 1]]))


def test_nonfinite_features_rejected():
    with pytest.raises(DataError):
        AttributedGraph.build(np.array([[np.nan]]), np.zeros((0, 2)))


def test_source_hash_sensitive_to_all_parts():
    g = toy_graph()
    h = g.source_hash()
    g2 = AttributedGraph(g.features.copy(), g.edges.copy(), None)
    assert g2.source_hash() == h
    X = g.features.copy()
    X[0, 0] += 1.0
    assert AttributedGraph(X, g.edges, None).source_hash() != h
    lab = np.zeros(g.n, dtype=np.int8)
    assert AttributedGraph(g.features, g.edges, lab).source_hash() != h


# ---------------------------------------------------------------- injection

def test_inject_counts_and_disjointness():
    g = toy_graph(n=60, d=4, seed=1)
    spec = InjectionSpec(clique_size=4, clique_count=3, contextual_count=10,
                         candidate_pool=8)
    out = inject_anomalies(g, spec, seed=5)
    assert out.labels is not None
    assert int(out.labels.sum()) == spec.total == 22
    # structural targets form cliques: check degrees inside the new edge set
    assert out.num_edges > g.num_edges


def test_inject_cliques_fully_connected():
    g = toy_graph(n=40, d=3, extra_edges=0, seed=2)
    spec = InjectionSpec(clique_size=5, clique_count=2, contextual_count=0,
                         candidate_pool=1)
    out = inject_anomalies(g, spec, seed=9)
    A = out.adjacency()
    anom = np.flatnonzero(out.labels)
    # the injected nodes split into cliques; within each clique all pairs env
    # every anomalous node has clique_size-1 anomalous neighbors at least
    sub = A[np.ix_(anom, anom)]
    assert (sub.sum(axis=1) >= spec.clique_size - 1).all()
    # expected new edge count: existing ring edges inside cliques get merged
    expected_new = 2 * (5 * 4 // 2)
    dup_margin = expected_new - (out.num_edges - g.num_edges)
    assert 0 <= dup_margin <= 10  # ring edges already inside cliques


def test_inject_contextual_swaps_to_far_candidate():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 4))
    g = AttributedGraph.build(X, np.array([[0, 1]]))
    spec = InjectionSpec(clique_size=2, clique_count=0, contextual_count=5,
                         candidate_pool=29)  # pool = everyone else: exact argmax
    out = inject_anomalies(g, spec, seed=11)
    anom = np.flatnonzero(out.labels)
    for i in anom:
        # with the full pool the new row must be the globally farthest row
        dists = np.linalg.norm(X - X[i], axis=1)
        far = int(np.argmax(dists))
        assert np.array_equal(out.features[i], X[far])
    # non-targets untouched
    keep = np.flatnonzero(out.labels == 0)
    assert np.array_equal(out.features[keep], X[keep])


def test_inject_refuses_labeled_or_small_graphs():
    labeled = toy_graph(labels=np.zeros(20, dtype=np.int8))
    with pytest.raises(DataError):
        inject_anomalies(labeled, InjectionSpec(2, 1, 0, 1), 0)
    tiny = toy_graph(n=5)
    with pytest.raises(DataError):
        inject_anomalies(tiny, InjectionSpec(3, 2, 0, 1), 0)


def test_inject_deterministic():
    g = toy_graph(n=50, seed=4)
    spec = InjectionSpec(3, 2, 4, 10)
    a = inject_anomalies(g, spec, seed=7)
    b = inject_anomalies(g, spec, seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.labels, b.labels)
    c = inject_anomalies(g, spec, seed=8)
    assert not np.array_equal(a.labels, c.labels)


# ---------------------------------------------------------------- masking

@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from(["row", "element"]),
       st.integers(0, 2 ** 31 - 1))
def test_mask_counts_exact(node_rate, edge_rate, mode, seed):
    g = toy_graph(n=23, d=7, seed=5)
    m = make_masks(g, node_rate, edge_rate, mode, seed)
    hidden_entries = int((m.feature_mask == 0).sum())
    if mode == "row":
        k = int(np.floor(node_rate * g.n))
        assert hidden_entries == k * g.d
        rows_gone = (m.feature_mask == 0).all(axis=1).sum()
        assert rows_gone == k
    else:
        assert hidden_entries == int(np.floor(node_rate * g.n * g.d))
    assert len(m.hidden_edges) == int(np.floor(edge_rate * g.num_edges))


def test_mask_rate_validation():
    g = toy_graph()
    with pytest.raises(UsageError):
        make_masks(g, -0.1, 0.0)
    with pytest.raises(UsageError):
        make_masks(g, 0.0, 1.0001)
    with pytest.raises(UsageError):
        make_masks(g, 0.5, 0.5, mode="diagonal")


def test_apply_masks_zeroes_and_removes():
    g = toy_graph(n=30, d=6, seed=6)
    m = make_masks(g, 0.3, 0.3, "row", seed=13)
    inc = apply_masks(g, m)
    assert inc.n == g.n and inc.d == g.d
    hidden_rows = np.flatnonzero((m.feature_mask == 0).all(axis=1))
    assert not inc.features_obs[hidden_rows].any()
    visible = np.flatnonzero((m.feature_mask == 1).all(axis=1))
    assert np.array_equal(inc.features_obs[visible], g.features[visible])
    assert len(inc.edges_obs) == g.num_edges - len(m.hidden_edges)
    # removed edges are gone from the observed adjacency
    A = inc.adjacency_obs()
    for u, v in m.hidden_edges:
        assert A[u, v] == 0.0 and A[v, u] == 0.0
    assert inc.source_hash == g.source_hash()


def test_apply_masks_deterministic_and_seed_sensitive():
    g = toy_graph(n=30, seed=7)
    a = apply_masks(g, make_masks(g, 0.3, 0.3, "row", seed=1))
    b = apply_masks(g, make_masks(g, 0.3, 0.3, "row", seed=1))
    assert np.array_equal(a.features_obs, b.features_obs)
    assert np.array_equal(a.edges_obs, b.edges_obs)
    c = apply_masks(g, make_masks(g, 0.3, 0.3, "row", seed=2))
    assert (not np.array_equal(a.features_obs, c.features_obs)
            or not np.array_equal(a.edges_obs, c.edges_obs))


def test_apply_masks_shape_mismatch():
    g = toy_graph(n=30)
    m = make_masks(toy_graph(n=10), 0.2, 0.2)
    with pytest.raises(DataError):
        apply_masks(g, m)


def test_zero_rates_are_identity():
    g = toy_graph(n=15, seed=8)
    inc = apply_masks(g, make_masks(g, 0.0, 0.0))
    assert np.array_equal(inc.features_obs, g.features)
    assert np.array_equal(inc.edges_obs, g.edges)


# ---------------------------------------------------------------- disk IO

def test_dataset_roundtrip(tmp_path):
    g = toy_graph(n=25, d=4, seed=9, labels=None)
    manifest_path = save_graph(tmp_path / "ds", g, "toy")
    m = read_manifest(manifest_path)
    g2 = load_graph(m)
    assert np.array_equal(g2.features, g.features)
    assert np.array_equal(g2.edges, g.edges)
    assert g2.labels is None


def test_dataset_roundtrip_with_labels(tmp_path):
    lab = np.zeros(25, dtype=np.int8)
    lab[:4] = 1
    g = toy_graph(n=25, d=4, seed=10, labels=lab)
    m = read_manifest(save_graph(tmp_path / "ds", g, "toy"))
    assert m.num_outliers == 4
    g2 = load_graph(m)
    assert np.array_equal(g2.labels, lab)


def test_manifest_count_mismatch_detected(tmp_path):
    g = toy_graph(n=25, d=4, seed=11)
    mp = save_graph(tmp_path / "ds", g, "toy")
    text = mp.read_text().replace("nodes = 25", "nodes = 26")
    mp.write_text(text)
    with pytest.raises(DataError):
        load_graph(read_manifest(mp))


def test_manifest_missing_key(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("name = x\n")
    with pytest.raises(DataError):
        read_manifest(p)


def test_bundle_roundtrip_bitexact(tmp_path):
    g = toy_graph(n=30, d=6, seed=12)
    inc = apply_masks(g, make_masks(g, 0.3, 0.25, "row", seed=3))
    save_bundle(tmp_path / "b", inc, labels=None)
    inc2, labels = load_bundle(tmp_path / "b")
    assert labels is None
    assert np.array_equal(inc2.features_obs, inc.features_obs)
    assert np.array_equal(inc2.edges_obs, inc.edges_obs)
    assert np.array_equal(inc2.mask.feature_mask, inc.mask.feature_mask)
    assert np.array_equal(inc2.mask.hidden_edges, inc.mask.hidden_edges)
    assert inc2.mask.mode == inc.mask.mode
    assert inc2.source_hash == inc.source_hash


def test_bundle_roundtrip_element_mode_with_labels(tmp_path):
    lab = (np.arange(30) < 3).astype(np.int8)
    g = toy_graph(n=30, d=6, seed=13)
    inc = apply_masks(g, make_masks(g, 0.2, 0.1, "element", seed=4))
    save_bundle(tmp_path / "b", inc, labels=lab)
    inc2, lab2 = load_bundle(tmp_path / "b")
    assert np.array_equal(lab2, lab)
    assert np.array_equal(inc2.mask.feature_mask, inc.mask.feature_mask)


def test_bundle_truncation_detected(tmp_path):
    g = toy_graph(n=30, d=6, seed=14)
    inc = apply_masks(g, make_masks(g, 0.3, 0.3, "row", seed=5))
    save_bundle(tmp_path / "b", inc)
    edges_file = tmp_path / "b" / "edges_obs.txt"
    lines = edges_file.read_text().splitlines()
    edges_file.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(DataError):
        load_bundle(tmp_path / "b")


def test_bundle_source_mismatch_warns(tmp_path, caplog):
    g = toy_graph(n=20, d=4, seed=15)
    other = toy_graph(n=20, d=4, seed=16)
    inc = apply_masks(g, make_masks(g, 0.1, 0.1))
    save_bundle(tmp_path / "b", inc)
    with caplog.at_level("WARNING", logger="igad.graphs"):
        load_bundle(tmp_path / "b", expect_source=other)
    assert any("hash" in r.message for r in caplog.records)
    caplog.clear()
    with caplog.at_level("WARNING", logger="igad.graphs"):
        load_bundle(tmp_path / "b", expect_source=g)
    assert not caplog.records
