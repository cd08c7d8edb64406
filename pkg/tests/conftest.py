from __future__ import annotations

from pathlib import Path

import pytest

from conch.hin import load_hin


def write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def toy_files(tmp_path: Path) -> dict[str, Path]:
    """The two-author/two-paper network used across the spec examples.

    A1 wrote P1 and P2; A2 wrote P1. Under author-paper-author both authors
    relate through P1 only.
    """
    nodes = write(
        tmp_path / "nodes.tsv",
        "A1\tauthor\nA2\tauthor\nP1\tpaper\nP2\tpaper\n",
    )
    edges = write(
        tmp_path / "edges.tsv",
        "writes\tA1\tP1\nwrites\tA1\tP2\nwrites\tA2\tP1\n",
    )
    labels = write(tmp_path / "labels.tsv", "A1\tdb\nA2\tml\n")
    split = write(tmp_path / "split.tsv", "A1\ttrain\nA2\ttest\n")
    return {"nodes": nodes, "edges": edges, "labels": labels, "split": split, "dir": tmp_path}


@pytest.fixture
def toy_hin(toy_files):
    return load_hin(toy_files["nodes"], toy_files["edges"], toy_files["labels"])
