"""Attributed heterogeneous information network: data model and TSV ingestion.

A network is loaded from plain TSV files (see the ``load_*`` functions for the
formats). Node and relation names are strings in the files; dense integer
indices are assigned in file order so that repeated loads of the same files
produce identical index assignments. Edges are semantically undirected: each
is stored once, in the orientation it first appeared, and expanded
symmetrically by consumers.

A loaded :class:`Hin` is treated as immutable and can be shared freely across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np


class HinFormatError(ValueError):
    """An input file is malformed or the loaded graph violates an invariant."""


def _rows(path: str | Path, n_fields: int) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, fields) for each data row of a TSV file.

    Blank lines and lines starting with '#' are skipped. Raises
    HinFormatError with file and line context on a wrong field count.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise HinFormatError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}"
                )
            yield lineno, fields


@dataclass
class Hin:
    """A typed multigraph with labels on one target node type.

    Node indices are global (over all types); ``members(type_name)`` gives the
    global indices of one type in file order, which also defines that type's
    local 0..n_t-1 indexing. Labels and features are keyed to the target type.
    """

    node_ids: tuple[str, ...]
    node_types: np.ndarray  # global node index -> type index
    type_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    edges: np.ndarray  # shape (m, 3): (relation index, src global, dst global)
    target_type: str
    labels: dict[int, int]  # global node index -> label index
    label_names: tuple[str, ...]
    features: np.ndarray | None  # (n_target, d_f), rows in target-local order

    _node_index: dict[str, int] = field(init=False, repr=False)
    _members: dict[str, np.ndarray] = field(init=False, repr=False)
    _local: np.ndarray = field(init=False, repr=False)
    _schema: frozenset[tuple[str, str, str]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._node_index = {nid: i for i, nid in enumerate(self.node_ids)}
        self._members = {}
        self._local = np.zeros(len(self.node_ids), dtype=np.int64)
        for t, name in enumerate(self.type_names):
            members = np.flatnonzero(self.node_types == t)
            self._members[name] = members
            self._local[members] = np.arange(len(members))
        triples = set()
        for rel, u, v in self.edges:
            tu = self.type_names[int(self.node_types[u])]
            tv = self.type_names[int(self.node_types[v])]
            lo, hi = sorted((tu, tv))
            triples.add((lo, self.relation_names[int(rel)], hi))
        self._schema = frozenset(triples)

    # --- lookups -------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def node(self, node_id: str) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise HinFormatError(f"unknown node {node_id!r}") from None

    def members(self, type_name: str) -> np.ndarray:
        """Global indices of all nodes of a type, in file order."""
        try:
            return self._members[type_name]
        except KeyError:
            raise HinFormatError(f"unknown node type {type_name!r}") from None

    def local(self, node: int) -> int:
        """Index of a node within its own type."""
        return int(self._local[node])

    def locals_of(self, nodes: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`local`."""
        return self._local[nodes]

    def type_index(self, type_name: str) -> int:
        try:
            return self.type_names.index(type_name)
        except ValueError:
            raise HinFormatError(f"unknown node type {type_name!r}") from None

    def type_of(self, node: int) -> str:
        return self.type_names[int(self.node_types[node])]

    @property
    def target_nodes(self) -> np.ndarray:
        return self.members(self.target_type)

    @property
    def n_target(self) -> int:
        return len(self.target_nodes)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    @property
    def schema(self) -> frozenset[tuple[str, str, str]]:
        """Set of (type, relation, type) triples, endpoint types sorted."""
        return self._schema

    def schema_has(self, t_src: str, relation: str, t_dst: str) -> bool:
        lo, hi = sorted((t_src, t_dst))
        return (lo, relation, hi) in self.schema

    def label_array(self) -> np.ndarray:
        """Labels in target-local order; -1 for unlabeled nodes."""
        out = np.full(self.n_target, -1, dtype=np.int64)
        for node, lab in self.labels.items():
            out[self.local(node)] = lab
        return out


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test sets of labeled target nodes.

    Members are target-local indices, sorted ascending.
    """

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]


def load_hin(
    node_file: str | Path,
    edge_file: str | Path,
    label_file: str | Path,
    feature_file: str | Path | None = None,
    target_type: str | None = None,
) -> Hin:
    """Load and validate a network from TSV files.

    Formats (UTF-8, '#' comment lines ignored):
      nodes.tsv     node_id <TAB> type_name
      edges.tsv     relation_name <TAB> src_id <TAB> dst_id
      labels.tsv    node_id <TAB> label_name
      features.tsv  node_id <TAB> v1,v2,...,vd   (target nodes only)

    Duplicate edges (same relation and endpoint pair, either orientation)
    collapse to a single stored edge. The target type is inferred from the
    labels unless given explicitly; every labeled node must have it.
    """
    node_ids: list[str] = []
    node_type_idx: list[int] = []
    type_names: list[str] = []
    type_index: dict[str, int] = {}
    index: dict[str, int] = {}
    for lineno, (nid, tname) in _rows(node_file, 2):
        if nid in index:
            raise HinFormatError(f"{node_file}:{lineno}: duplicate node id {nid!r}")
        if tname not in type_index:
            type_index[tname] = len(type_names)
            type_names.append(tname)
        index[nid] = len(node_ids)
        node_ids.append(nid)
        node_type_idx.append(type_index[tname])

    relation_names: list[str] = []
    relation_index: dict[str, int] = {}
    edges: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    for lineno, (rname, sid, did) in _rows(edge_file, 3):
        if sid not in index:
            raise HinFormatError(f"{edge_file}:{lineno}: unknown node {sid!r}")
        if did not in index:
            raise HinFormatError(f"{edge_file}:{lineno}: unknown node {did!r}")
        if rname not in relation_index:
            relation_index[rname] = len(relation_names)
            relation_names.append(rname)
        r, u, v = relation_index[rname], index[sid], index[did]
        key = (r, u, v) if u <= v else (r, v, u)
        if key in seen:
            continue
        seen.add(key)
        edges.append((r, u, v))

    labels: dict[int, int] = {}
    label_names: list[str] = []
    label_index: dict[str, int] = {}
    inferred_target = target_type
    for lineno, (nid, lname) in _rows(label_file, 2):
        if nid not in index:
            raise HinFormatError(f"{label_file}:{lineno}: unknown node {nid!r}")
        node = index[nid]
        tname = type_names[node_type_idx[node]]
        if inferred_target is None:
            inferred_target = tname
        elif tname != inferred_target:
            raise HinFormatError(
                f"{label_file}:{lineno}: label on non-target node {nid!r} "
                f"(type {tname!r}, target is {inferred_target!r})"
            )
        if node in labels:
            raise HinFormatError(f"{label_file}:{lineno}: duplicate label for node {nid!r}")
        if lname not in label_index:
            label_index[lname] = len(label_names)
            label_names.append(lname)
        labels[node] = label_index[lname]

    if inferred_target is None:
        raise HinFormatError(f"{label_file}: no labels found; cannot determine target type")
    if inferred_target not in type_index:
        raise HinFormatError(f"unknown target type {inferred_target!r}")
    if len(label_names) < 2:
        raise HinFormatError(f"{label_file}: need at least 2 distinct labels, got {len(label_names)}")

    hin = Hin(
        node_ids=tuple(node_ids),
        node_types=np.asarray(node_type_idx, dtype=np.int64),
        type_names=tuple(type_names),
        relation_names=tuple(relation_names),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 3),
        target_type=inferred_target,
        labels=labels,
        label_names=tuple(label_names),
        features=None,
    )

    if feature_file is not None:
        hin.features = _load_features(feature_file, hin)
    return hin


def _load_features(path: str | Path, hin: Hin) -> np.ndarray:
    rows: dict[int, np.ndarray] = {}
    dim: int | None = None
    for lineno, (nid, csv) in _rows(path, 2):
        node = hin.node(nid)
        if hin.type_of(node) != hin.target_type:
            raise HinFormatError(
                f"{path}:{lineno}: feature row for non-target node {nid!r}"
            )
        try:
            vec = np.asarray([float(tok) for tok in csv.split(",")], dtype=np.float64)
        except ValueError as exc:
            raise HinFormatError(f"{path}:{lineno}: bad feature value ({exc})") from None
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise HinFormatError(
                f"{path}:{lineno}: feature dimension {len(vec)} != {dim} seen earlier"
            )
        local = hin.local(node)
        if local in rows:
            raise HinFormatError(f"{path}:{lineno}: duplicate feature row for {nid!r}")
        rows[local] = vec
    if len(rows) != hin.n_target:
        raise HinFormatError(
            f"{path}: feature row count {len(rows)} != target-node count {hin.n_target}"
        )
    out = np.zeros((hin.n_target, dim or 0), dtype=np.float64)
    for local, vec in rows.items():
        out[local] = vec
    return out


def one_hot_fallback_features(hin: Hin) -> np.ndarray:
    """Identity feature matrix for target nodes when no feature file exists."""
    return np.eye(hin.n_target, dtype=np.float64)


_PARTITIONS = {"train": "train", "val": "validation", "test": "test"}


def load_split(split_file: str | Path, hin: Hin) -> Split:
    """Load a train/val/test split: ``node_id <TAB> {train|val|test}``.

    Every listed node must be a labeled target node and appear at most once.
    """
    parts: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    assigned: set[int] = set()
    for lineno, (nid, token) in _rows(split_file, 2):
        node = hin.node(nid)
        if token not in _PARTITIONS:
            raise HinFormatError(
                f"{split_file}:{lineno}: bad partition {token!r} (want train/val/test)"
            )
        if node in assigned:
            raise HinFormatError(f"{split_file}:{lineno}: duplicate assignment for {nid!r}")
        if node not in hin.labels:
            raise HinFormatError(f"{split_file}:{lineno}: node {nid!r} is unlabeled")
        assigned.add(node)
        parts[_PARTITIONS[token]].append(hin.local(node))
    return Split(
        train=tuple(sorted(parts["train"])),
        validation=tuple(sorted(parts["validation"])),
        test=tuple(sorted(parts["test"])),
    )


def save_hin(
    hin: Hin,
    node_file: str | Path,
    edge_file: str | Path,
    label_file: str | Path,
    feature_file: str | Path | None = None,
) -> None:
    """Write a network back out in the TSV formats read by :func:`load_hin`."""
    with open(node_file, "w", encoding="utf-8") as fh:
        for nid, t in zip(hin.node_ids, hin.node_types):
            fh.write(f"{nid}\t{hin.type_names[int(t)]}\n")
    with open(edge_file, "w", encoding="utf-8") as fh:
        for rel, u, v in hin.edges:
            fh.write(
                f"{hin.relation_names[int(rel)]}\t{hin.node_ids[int(u)]}\t{hin.node_ids[int(v)]}\n"
            )
    with open(label_file, "w", encoding="utf-8") as fh:
        for node in sorted(hin.labels):
            fh.write(f"{hin.node_ids[node]}\t{hin.label_names[hin.labels[node]]}\n")
    if feature_file is not None and hin.features is not None:
        targets = hin.target_nodes
        with open(feature_file, "w", encoding="utf-8") as fh:
            for local, node in enumerate(targets):
                csv = ",".join(repr(float(x)) for x in hin.features[local])
                fh.write(f"{hin.node_ids[int(node)]}\t{csv}\n")


def save_split(split: Split, hin: Hin, split_file: str | Path) -> None:
    """Write a split in the format read by :func:`load_split`."""
    targets = hin.target_nodes
    with open(split_file, "w", encoding="utf-8") as fh:
        for token, locals_ in (("train", split.train), ("val", split.validation), ("test", split.test)):
            for local in locals_:
                fh.write(f"{hin.node_ids[int(targets[local])]}\t{token}\n")
