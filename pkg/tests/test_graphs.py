"""Graph construction, masking + normalization, and the file format."""

import numpy as np
import pytest

from tcgpn import graphs
from tcgpn.data import SyntheticSpec, gen_synthetic
from tcgpn.graphs import (CorrelationGraph, _apply_mask, build_distance_graph,
                          build_industry_graph, load_graph, mask_and_normalize,
                          save_graph)


class FakePanel:
    def __init__(self, features, node_ids=None):
        self.features = np.asarray(features, dtype=float)
        self.node_ids = node_ids or [f"S{i}" for i in range(self.features.shape[0])]


# industry graph ---------------------------------------------------------------


def test_industry_equal_metrics_give_weight_two_both_ways():
    g = build_industry_graph([("a", "tech", 5.0, 9.0), ("b", "tech", 5.0, 9.0)])
    assert g.weights[0, 1] == pytest.approx(2.0)
    assert g.weights[1, 0] == pytest.approx(2.0)
    assert g.directed


def test_industry_cross_industry_weight_is_exactly_zero():
    g = build_industry_graph([("a", "tech", 1.0, 1.0), ("b", "bank", 1.0, 1.0)])
    assert g.weights[0, 1] == 0.0 and g.weights[1, 0] == 0.0


def test_industry_ratio_weights():
    g = build_industry_graph([("a", "tech", 2.0, 4.0), ("b", "tech", 1.0, 2.0)])
    assert g.weights[0, 1] == pytest.approx(1.0)  # 1/2 + 2/4
    assert g.weights[1, 0] == pytest.approx(4.0)  # 2/1 + 4/2


def test_industry_rejects_non_positive_and_duplicates():
    with pytest.raises(ValueError):
        build_industry_graph([("a", "t", 0.0, 1.0), ("b", "t", 1.0, 1.0)])
    with pytest.raises(ValueError):
        build_industry_graph([("a", "t", 1.0, -1.0), ("b", "t", 1.0, 1.0)])
    with pytest.raises(ValueError):
        build_industry_graph([("a", "t", 1.0, 1.0), ("a", "t", 1.0, 1.0)])


def test_industry_zero_block_structure_random():
    rng = np.random.default_rng(0)
    industries = ["x", "x", "y", "y", "y", "z"]
    rows = [(f"n{i}", industries[i], rng.uniform(1, 9), rng.uniform(1, 9))
            for i in range(6)]
    g = build_industry_graph(rows)
    for i in range(6):
        for j in range(6):
            if industries[i] != industries[j]:
                assert g.weights[i, j] == 0.0
            elif i != j:
                assert g.weights[i, j] > 0.0


# distance graph ----------------------------------------------------------------


def test_distance_identical_series_weight_zero():
    panel = FakePanel(np.stack([np.ones((4, 1)), np.ones((4, 1)), np.zeros((4, 1))]))
    g = build_distance_graph(panel, k_neighbors=1)
    assert g.weights[0, 1] == 0.0  # zero distance stores a zero weight


def test_distance_euclidean_value():
    panel = FakePanel(np.array([[[1.0], [1.0]], [[0.0], [0.0]]]))
    g = build_distance_graph(panel, k_neighbors=1)
    assert g.weights[0, 1] == pytest.approx(np.sqrt(2.0))
    assert g.weights[1, 0] == pytest.approx(np.sqrt(2.0))


def test_distance_knn_union_against_bruteforce():
    rng = np.random.default_rng(5)
    feats = rng.normal(size=(5, 6, 2))
    panel = FakePanel(feats)
    g = build_distance_graph(panel, k_neighbors=2)

    # brute-force oracle on the same 5x5 distance matrix
    flat = feats.reshape(5, -1)
    dist = np.sqrt(((flat[:, None] - flat[None]) ** 2).sum(-1))
    keep = np.zeros((5, 5), bool)
    for i in range(5):
        order = [j for j in np.argsort(dist[i]) if j != i][:2]
        keep[i, order] = True
    keep |= keep.T
    expected = np.where(keep, dist, 0.0)
    np.fill_diagonal(expected, 0.0)
    assert np.allclose(g.weights, expected)

    nz_per_row = (g.weights != 0).sum(axis=1)
    assert np.all(nz_per_row >= 2) and np.all(nz_per_row <= 4)
    assert np.array_equal(g.weights, g.weights.T)


def test_distance_symmetry_and_zero_diag_property():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        panel = FakePanel(rng.normal(size=(7, 5, 3)))
        g = build_distance_graph(panel, k_neighbors=3)
        assert np.array_equal(g.weights, g.weights.T)
        assert np.all(np.diag(g.weights) == 0)


def test_distance_rejects_tiny_or_bad_k():
    panel = FakePanel(np.zeros((1, 3, 1)))
    with pytest.raises(ValueError):
        build_distance_graph(panel, 1)
    panel = FakePanel(np.zeros((3, 3, 1)))
    with pytest.raises(ValueError):
        build_distance_graph(panel, 3)


# masking ------------------------------------------------------------------------


def _toy_graph():
    w = np.array([
        [0.0, 2.0, 2.0, 0.0],
        [1.0, 0.0, 0.0, 3.0],
        [2.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
    ])
    return CorrelationGraph(4, w, directed=True, node_ids=list("abcd"))


def test_mask_rate_zero_is_pure_row_normalization():
    g = CorrelationGraph(3, np.array([[0.0, 2.0, 2.0], [0, 0, 0], [1.0, 0, 0]]),
                         directed=True, node_ids=list("abc"))
    m = mask_and_normalize(g, 0.0, seed=0)
    assert np.allclose(m.input_weights[0], [0.0, 0.5, 0.5])
    assert m.mask_kept.all()
    assert np.array_equal(g.weights[0], [0.0, 2.0, 2.0])  # base untouched


def test_mask_exact_count():
    rng = np.random.default_rng(0)
    w = np.zeros((10, 10))
    off_diag = [(i, j) for i in range(10) for j in range(10) if i != j]
    pick = rng.choice(len(off_diag), size=40, replace=False)
    for p in pick:
        w[off_diag[p]] = rng.uniform(0.5, 2.0)
    g = CorrelationGraph(10, w, directed=True, node_ids=[f"n{i}" for i in range(10)])
    assert g.nnz() == 40
    m = mask_and_normalize(g, 0.3, seed=1)
    assert (~m.mask_kept).sum() == 12  # floor(0.3 * 40)


def test_mask_rows_renormalized_and_zeros_where_masked():
    g = _toy_graph()
    for seed in range(8):
        m = mask_and_normalize(g, 0.4, seed=seed)
        assert np.all(m.input_weights[~m.mask_kept] == 0.0)
        assert np.all(m.input_weights[g.weights == 0] == 0.0)
        sums = m.input_weights.sum(axis=1)
        for i in range(4):
            if (m.input_weights[i] != 0).any():
                assert sums[i] == pytest.approx(1.0, abs=1e-6)


def test_mask_permutation_commutes_with_replayed_edge_set():
    g = _toy_graph()
    rng = np.random.default_rng(3)
    perm = rng.permutation(4)
    rows, cols = np.nonzero(g.weights)
    pick = rng.choice(len(rows), size=2, replace=False)
    masked = (rows[pick], cols[pick])

    direct = _apply_mask(g, masked, 0.3)
    permuted_graph = CorrelationGraph(4, g.weights[np.ix_(perm, perm)], directed=True,
                                      node_ids=[g.node_ids[i] for i in perm])
    inv = np.argsort(perm)
    masked_p = (inv[masked[0]], inv[masked[1]])
    via_perm = _apply_mask(permuted_graph, masked_p, 0.3)
    assert np.allclose(via_perm.input_weights, direct.input_weights[np.ix_(perm, perm)])
    assert np.array_equal(via_perm.mask_kept, direct.mask_kept[np.ix_(perm, perm)])


def test_mask_node_mode_blanks_rows():
    g = _toy_graph()
    m = mask_and_normalize(g, 0.5, seed=0, mask_mode="node")
    blanked = np.flatnonzero(~m.mask_kept.all(axis=1))
    assert len(blanked) == 2  # floor(0.5 * 4)
    assert np.all(m.input_weights[blanked] == 0.0)


def test_mask_rejects_bad_rate():
    with pytest.raises(ValueError):
        mask_and_normalize(_toy_graph(), 1.0, seed=0)


# file format ---------------------------------------------------------------------


def test_graph_file_round_trip_directed(tmp_path):
    g = _toy_graph()
    path = tmp_path / "g.txt"
    save_graph(path, g)
    text = path.read_text().splitlines()
    assert text[0] == "tcgpn-graph v1 directed=1 n=4"
    loaded = load_graph(path, g.node_ids)
    assert np.allclose(loaded.weights, g.weights)
    assert loaded.directed


def test_graph_file_round_trip_undirected_synthetic(tmp_path):
    panel, truth = gen_synthetic(SyntheticSpec(n_clusters=2, nodes_per_cluster=3,
                                               length=40, seed=1))
    path = tmp_path / "g.txt"
    save_graph(path, truth)
    loaded = load_graph(path, truth.node_ids)
    assert np.array_equal(loaded.weights, truth.weights)
    # undirected file stores each edge once
    n_lines = len(path.read_text().splitlines()) - 1
    assert n_lines == truth.nnz() // 2


def test_graph_loader_validates_ids_and_header(tmp_path):
    g = _toy_graph()
    path = tmp_path / "g.txt"
    save_graph(path, g)
    with pytest.raises(ValueError, match="n="):
        load_graph(path, ["a", "b"])
    bad = tmp_path / "bad.txt"
    bad.write_text("tcgpn-graph v2 directed=1 n=4\n")
    with pytest.raises(ValueError, match="header"):
        load_graph(bad, g.node_ids)
    unknown = tmp_path / "unk.txt"
    unknown.write_text("tcgpn-graph v1 directed=1 n=4\nzz,b,1.0\n")
    with pytest.raises(ValueError, match="unknown node"):
        load_graph(unknown, g.node_ids)
