from __future__ import annotations

import numpy as np
import pytest

from conch.hin import (
    HinFormatError,
    load_hin,
    load_split,
    one_hot_fallback_features,
    save_hin,
    save_split,
)

from conftest import write


def test_minimal_well_formed_input(tmp_path):
    nodes = write(tmp_path / "n.tsv", "A1\tauthor\nA2\tauthor\nP1\tpaper\n")
    edges = write(tmp_path / "e.tsv", "writes\tA1\tP1\n")
    labels = write(tmp_path / "l.tsv", "# labels\nA1\tdb\nA2\tml\n")
    hin = load_hin(nodes, edges, labels)
    assert hin.n_nodes == 3
    assert len(hin.edges) == 1
    assert hin.schema == frozenset({("author", "writes", "paper")})
    assert hin.target_type == "author"


def test_unknown_node_in_edge_errors(tmp_path):
    nodes = write(tmp_path / "n.tsv", "A1\tauthor\nA2\tauthor\n")
    edges = write(tmp_path / "e.tsv", "writes\tA1\tP9\n")
    labels = write(tmp_path / "l.tsv", "A1\tdb\nA2\tml\n")
    with pytest.raises(HinFormatError, match="unknown node"):
        load_hin(nodes, edges, labels)


def test_duplicate_edges_collapse(tmp_path):
    nodes = write(tmp_path / "n.tsv", "A1\tauthor\nA2\tauthor\nP1\tpaper\n")
    edges = write(
        tmp_path / "e.tsv",
        "writes\tA1\tP1\nwrites\tA1\tP1\nwrites\tP1\tA1\nwrites\tA2\tP1\n",
    )
    labels = write(tmp_path / "l.tsv", "A1\tdb\nA2\tml\n")
    hin = load_hin(nodes, edges, labels)
    assert len(hin.edges) == 2  # A1-P1 once (reversed duplicate dropped), A2-P1


def test_label_on_non_target_node_errors(toy_files):
    bad = write(toy_files["dir"] / "bad_labels.tsv", "A1\tdb\nP1\tml\n")
    with pytest.raises(HinFormatError, match="non-target"):
        load_hin(toy_files["nodes"], toy_files["edges"], bad)


def test_malformed_line_reports_file_and_lineno(tmp_path):
    nodes = write(tmp_path / "n.tsv", "A1\tauthor\nbroken-line\n")
    with pytest.raises(HinFormatError, match=r"n\.tsv:2"):
        load_hin(nodes, tmp_path / "e.tsv", tmp_path / "l.tsv")


def test_feature_loading_and_count_mismatch(toy_files):
    feats = write(toy_files["dir"] / "f.tsv", "A1\t1.0,2.0\nA2\t3.0,4.0\n")
    hin = load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"], feats)
    assert hin.features.shape == (2, 2)
    assert np.allclose(hin.features[hin.local(hin.node("A2"))], [3.0, 4.0])

    short = write(toy_files["dir"] / "f2.tsv", "A1\t1.0,2.0\n")
    with pytest.raises(HinFormatError, match="row count"):
        load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"], short)

    ragged = write(toy_files["dir"] / "f3.tsv", "A1\t1.0,2.0\nA2\t3.0\n")
    with pytest.raises(HinFormatError, match="dimension"):
        load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"], ragged)


def test_one_hot_fallback(toy_hin):
    feats = one_hot_fallback_features(toy_hin)
    assert feats.shape == (2, 2)
    assert np.array_equal(feats, np.eye(2))
    assert np.allclose(feats.sum(axis=1), 1.0)


def test_one_hot_single_node():
    import conch.hin as hmod

    hin = hmod.Hin(
        node_ids=("A1", "A2"),
        node_types=np.array([0, 0]),
        type_names=("author",),
        relation_names=(),
        edges=np.zeros((0, 3), dtype=np.int64),
        target_type="author",
        labels={0: 0, 1: 1},
        label_names=("x", "y"),
        features=None,
    )
    assert np.array_equal(one_hot_fallback_features(hin), np.eye(2))


def test_split_roundtrip_and_validation(toy_files, toy_hin):
    split = load_split(toy_files["split"], toy_hin)
    assert split.train == (toy_hin.local(toy_hin.node("A1")),)
    assert split.test == (toy_hin.local(toy_hin.node("A2")),)
    assert split.validation == ()

    dup = write(toy_files["dir"] / "s2.tsv", "A1\ttrain\nA1\ttest\n")
    with pytest.raises(HinFormatError, match="duplicate assignment"):
        load_split(dup, toy_hin)

    unlabeled = write(toy_files["dir"] / "s3.tsv", "P1\ttrain\n")
    with pytest.raises(HinFormatError, match="unlabeled"):
        load_split(unlabeled, toy_hin)

    out = toy_files["dir"] / "s4.tsv"
    save_split(split, toy_hin, out)
    again = load_split(out, toy_hin)
    assert again == split


def test_schema_closure(toy_hin):
    schema = toy_hin.schema
    for rel, u, v in toy_hin.edges:
        tu, tv = toy_hin.type_of(int(u)), toy_hin.type_of(int(v))
        lo, hi = sorted((tu, tv))
        assert (lo, toy_hin.relation_names[int(rel)], hi) in schema


def test_save_load_roundtrip(tmp_path, toy_hin):
    n, e, l = tmp_path / "n2.tsv", tmp_path / "e2.tsv", tmp_path / "l2.tsv"
    save_hin(toy_hin, n, e, l)
    again = load_hin(n, e, l)
    assert again.node_ids == toy_hin.node_ids
    assert again.type_names == toy_hin.type_names
    assert np.array_equal(again.edges, toy_hin.edges)
    assert again.labels == toy_hin.labels
    assert again.label_names == toy_hin.label_names


def test_requires_two_labels(tmp_path):
    nodes = write(tmp_path / "n.tsv", "A1\tauthor\nA2\tauthor\n")
    edges = write(tmp_path / "e.tsv", "")
    labels = write(tmp_path / "l.tsv", "A1\tdb\nA2\tdb\n")
    with pytest.raises(HinFormatError, match="at least 2 distinct labels"):
        load_hin(nodes, edges, labels)


def test_explicit_target_type(toy_files):
    hin = load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"],
                   target_type="author")
    assert hin.target_type == "author"
    with pytest.raises(HinFormatError, match="non-target"):
        load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"],
                 target_type="paper")
