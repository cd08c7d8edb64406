from __future__ import annotations

import numpy as np
import pytest

from conch.contexts import (
    build_context_graph,
    context_feature,
    corrupt_features,
    instance_embedding,
    load_context_graph,
    load_embeddings,
    save_context_graph,
    save_embeddings,
    structural_embeddings,
)
from conch.hin import HinFormatError, load_hin
from conch.metapaths import MetaPath, count_paths, top_k_neighbors

from conftest import write
from oracle_utils import random_hin


@pytest.fixture
def movie_files(tmp_path):
    """Movies sharing actors: M1-A1-M3 and M2-A2-M4 are the only MAM pairs."""
    nodes = write(
        tmp_path / "n.tsv",
        "M1\tmovie\nM2\tmovie\nM3\tmovie\nM4\tmovie\nA1\tactor\nA2\tactor\n",
    )
    edges = write(
        tmp_path / "e.tsv",
        "acts\tA1\tM1\nacts\tA1\tM3\nacts\tA2\tM2\nacts\tA2\tM4\n",
    )
    labels = write(tmp_path / "l.tsv", "M1\taction\nM2\tdrama\nM3\taction\nM4\tdrama\n")
    return tmp_path, nodes, edges, labels


MAM = MetaPath(name="MAM", types=("movie", "actor", "movie"), relations=("acts", "acts"))


def test_embedding_roundtrip(toy_hin, tmp_path):
    emb = structural_embeddings(toy_hin, d_e=8, seed=3)
    path = tmp_path / "emb.tsv"
    save_embeddings(emb, toy_hin, path)
    again = load_embeddings(path, toy_hin)
    assert np.allclose(emb, again, atol=0)  # repr round-trips floats exactly
    assert again.shape == (toy_hin.n_nodes, 8)


def test_embedding_dimension_mismatch(toy_hin, tmp_path):
    bad = write(tmp_path / "emb.tsv", "A1\t1.0,2.0\nA2\t1.0\nP1\t0.0,0.0\nP2\t0.0,1.0\n")
    with pytest.raises(HinFormatError, match="dimension"):
        load_embeddings(bad, toy_hin)


def test_embedding_missing_node(toy_hin, tmp_path):
    partial = write(tmp_path / "emb.tsv", "A1\t1.0,2.0\nA2\t0.5,0.5\n")
    with pytest.raises(HinFormatError, match="missing"):
        load_embeddings(partial, toy_hin)
    # restricting to author-only requirements makes the same file fine
    emb = load_embeddings(partial, toy_hin, required_types={"author"})
    assert emb.shape == (4, 2)


def test_structural_embeddings_deterministic_and_degree_based(toy_hin):
    a = structural_embeddings(toy_hin, d_e=6, seed=1)
    b = structural_embeddings(toy_hin, d_e=6, seed=1)
    assert np.array_equal(a, b)
    c = structural_embeddings(toy_hin, d_e=6, seed=2)
    assert not np.array_equal(a, c)
    # P1 and P2 differ in degree (2 vs 1 authors), A1 vs A2 differ too
    p1, p2 = toy_hin.node("P1"), toy_hin.node("P2")
    assert not np.allclose(a[p1], a[p2])


def test_structural_embeddings_identical_profiles_identical_vectors(movie_files):
    tmp, nodes, edges, labels = movie_files
    hin = load_hin(nodes, edges, labels)
    emb = structural_embeddings(hin, d_e=5, seed=0)
    # all four movies have exactly one actor edge -> identical typed degrees
    m = [hin.node(f"M{i}") for i in (1, 2, 3, 4)]
    for other in m[1:]:
        assert np.allclose(emb[m[0]], emb[other])


def test_structural_embedding_d1_proportional_to_degree(toy_hin):
    emb = structural_embeddings(toy_hin, d_e=1, seed=4)
    a1, a2 = toy_hin.node("A1"), toy_hin.node("A2")
    # same bucket, degrees 2 and 1: vectors proportional with factor 2
    assert emb[a1] == pytest.approx(2.0 * emb[a2])


def test_instance_embedding_mean():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    vec = instance_embedding((0, 1, 2), emb)
    assert np.allclose(vec, [2.0 / 3.0, 1.0 / 3.0])
    # permutation invariance
    assert np.allclose(vec, instance_embedding((2, 0, 1), emb))
    # all-equal vectors collapse to themselves
    same = np.array([[0.3, 0.7]] * 3)
    assert np.allclose(instance_embedding((0, 1, 2), same), [0.3, 0.7])


def test_context_feature_mean_of_instances():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
    single = context_feature([(0, 1)], emb)
    assert np.allclose(single, [0.5, 0.5])
    two = context_feature([(0, 0), (1, 1)], emb)
    assert np.allclose(two, [0.5, 0.5])
    with pytest.raises(ValueError, match="empty"):
        context_feature([], emb)


def test_context_feature_two_instance_example(tmp_path):
    # two movies sharing two actors: feature averages both M-A-M instances
    nodes = write(tmp_path / "n.tsv", "M1\tmovie\nM2\tmovie\nA1\tactor\nA2\tactor\n")
    edges = write(
        tmp_path / "e.tsv",
        "acts\tA1\tM1\nacts\tA1\tM2\nacts\tA2\tM1\nacts\tA2\tM2\n",
    )
    labels = write(tmp_path / "l.tsv", "M1\tx\nM2\ty\n")
    hin = load_hin(nodes, edges, labels)
    from conch.metapaths import enumerate_instances

    m1, m2 = hin.local(hin.node("M1")), hin.local(hin.node("M2"))
    instances = enumerate_instances(hin, MAM, m1, m2)
    assert len(instances) == 2
    emb = np.zeros((4, 2))
    emb[hin.node("M1")] = [1.0, 0.0]
    emb[hin.node("M2")] = [0.0, 1.0]
    emb[hin.node("A1")] = [1.0, 1.0]
    emb[hin.node("A2")] = [0.0, 0.0]
    feature = context_feature(instances, emb)
    expected = (np.array([2.0, 2.0]) / 3.0 + np.array([1.0, 1.0]) / 3.0) / 2.0
    assert np.allclose(feature, expected)


def test_build_context_graph_movie_example(movie_files):
    tmp, nodes, edges, labels = movie_files
    hin = load_hin(nodes, edges, labels)
    emb = structural_embeddings(hin, d_e=4, seed=0)
    cm = count_paths(hin, MAM)
    index = top_k_neighbors(cm, k=5, metapath="MAM")
    graph = build_context_graph(hin, MAM, index, emb)
    assert graph.n_contexts == 2
    assert len(graph.edges()) == 4
    pairs = {
        (hin.node_ids[hin.target_nodes[u]], hin.node_ids[hin.target_nodes[v]])
        for u, v in zip(graph.u_index, graph.v_index)
    }
    assert pairs == {("M1", "M3"), ("M2", "M4")}
    assert np.array_equal(graph.counts, [1, 1])


def test_empty_neighbor_index_gives_empty_graph(movie_files):
    tmp, nodes, edges, labels = movie_files
    hin = load_hin(nodes, edges, labels)
    emb = structural_embeddings(hin, d_e=4, seed=0)
    from conch.metapaths import NeighborIndex

    empty = NeighborIndex(metapath="MAM", k=3, neighbors=[[] for _ in range(hin.n_target)])
    graph = build_context_graph(hin, MAM, empty, emb)
    assert graph.n_contexts == 0
    assert graph.features.shape == (0, 4)


def test_context_graph_structural_invariants_random():
    for seed in range(12):
        hin, metapaths = random_hin(seed)
        mp = metapaths[0]
        emb = structural_embeddings(hin, d_e=3, seed=seed)
        cm = count_paths(hin, mp)
        for k in (1, 2, 4):
            index = top_k_neighbors(cm, k=k, metapath=mp.name)
            graph = build_context_graph(hin, mp, index, emb)
            # context degree is exactly 2 (two distinct endpoints)
            assert np.all(graph.u_index < graph.v_index)
            # object degree bounded by k
            assert graph.object_degrees().max(initial=0) <= k
            # one context per unordered pair
            pairs = list(zip(graph.u_index.tolist(), graph.v_index.tolist()))
            assert len(set(pairs)) == len(pairs)
            # counts match the count matrix (whichever direction is populated)
            for j, (u, v) in enumerate(pairs):
                expected = cm[u, v] if cm[u, v] > 0 else cm[v, u]
                assert graph.counts[j] == expected
            assert np.isfinite(graph.features).all()


def test_union_symmetrization_one_sided_pair(tmp_path):
    # B is A's only neighbor; B prefers C (2 shared papers) at k=1. The A-B
    # pair exists only through A's own list and must still become a context
    # connecting both endpoints since budgets allow it.
    nodes = write(
        tmp_path / "n.tsv",
        "A\tauthor\nB\tauthor\nC\tauthor\nP1\tpaper\nP2\tpaper\nP3\tpaper\n",
    )
    edges = write(
        tmp_path / "e.tsv",
        "w\tA\tP1\nw\tB\tP1\nw\tB\tP2\nw\tB\tP3\nw\tC\tP2\nw\tC\tP3\n",
    )
    labels = write(tmp_path / "l.tsv", "A\tx\nB\ty\nC\tx\n")
    hin = load_hin(nodes, edges, labels)
    apa = MetaPath(name="APA", types=("author", "paper", "author"), relations=("w", "w"))
    cm = count_paths(hin, apa)
    index = top_k_neighbors(cm, k=2, metapath="APA")
    emb = structural_embeddings(hin, d_e=2, seed=0)
    graph = build_context_graph(hin, apa, index, emb)
    a, b = hin.local(hin.node("A")), hin.local(hin.node("B"))
    pairs = set(zip(graph.u_index.tolist(), graph.v_index.tolist()))
    assert (min(a, b), max(a, b)) in pairs
    assert graph.object_degrees().max() <= 2


def test_corruption_preserves_row_multiset():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((10, 4))
    shuffled = corrupt_features(x, seed=5)
    assert not np.array_equal(shuffled, x)  # overwhelmingly likely
    assert np.allclose(np.sort(x, axis=0), np.sort(shuffled, axis=0))
    assert np.array_equal(corrupt_features(x, seed=5), shuffled)
    single = np.array([[1.0, 2.0]])
    assert np.array_equal(corrupt_features(single, seed=1), single)


def test_context_graph_roundtrip(movie_files, tmp_path):
    tmp, nodes, edges, labels = movie_files
    hin = load_hin(nodes, edges, labels)
    emb = structural_embeddings(hin, d_e=4, seed=0)
    cm = count_paths(hin, MAM)
    index = top_k_neighbors(cm, k=5, metapath="MAM")
    graph = build_context_graph(hin, MAM, index, emb)
    path = tmp_path / "contexts.MAM.tsv"
    save_context_graph(graph, hin, path)
    again = load_context_graph(path, hin, "MAM")
    assert np.array_equal(again.u_index, graph.u_index)
    assert np.array_equal(again.v_index, graph.v_index)
    assert np.array_equal(again.counts, graph.counts)
    assert np.array_equal(again.features, graph.features)  # exact via repr round-trip


def test_context_feature_in_convex_hull_random():
    # feature of a context lies within the bounding box of the participating
    # node embeddings (a consequence of being a mean of means)
    hin, metapaths = random_hin(3)
    mp = metapaths[0]
    emb = structural_embeddings(hin, d_e=3, seed=1)
    from conch.metapaths import enumerate_instances, step_matrices

    cm = count_paths(hin, mp)
    index = top_k_neighbors(cm, k=3, metapath=mp.name)
    graph = build_context_graph(hin, mp, index, emb)
    steps = step_matrices(hin, mp)
    for j in range(graph.n_contexts):
        inst = enumerate_instances(hin, mp, int(graph.u_index[j]), int(graph.v_index[j]), steps=steps)
        nodes = sorted({g for p in inst for g in p})
        lo = emb[nodes].min(axis=0) - 1e-12
        hi = emb[nodes].max(axis=0) + 1e-12
        assert np.all(graph.features[j] >= lo) and np.all(graph.features[j] <= hi)
