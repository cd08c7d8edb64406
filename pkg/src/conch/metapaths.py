"""Meta-path instance counting, PathSim scoring, and top-k neighbor filtering.

Counting uses the standard commuting-matrix trick: the number of instances of
a meta-path between two endpoint objects is the corresponding entry of the
product of the per-step bipartite adjacency matrices, kept sparse throughout.
Count matrices, PathSim scores, and neighbor indexes are all expressed in the
target type's local index space.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .hin import Hin, HinFormatError


@dataclass(frozen=True)
class MetaPath:
    """An alternating type/relation sequence starting and ending at the target type."""

    name: str
    types: tuple[str, ...]
    relations: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.types) != len(self.relations) + 1:
            raise ValueError(
                f"meta-path {self.name!r}: {len(self.types)} types need "
                f"{len(self.types) - 1} relations, got {len(self.relations)}"
            )
        if len(self.relations) < 2:
            raise ValueError(f"meta-path {self.name!r}: length must be at least 2")

    @property
    def length(self) -> int:
        return len(self.relations)

    def validate(self, hin: Hin) -> None:
        """Check endpoints and every step against the network schema."""
        if self.types[0] != hin.target_type or self.types[-1] != hin.target_type:
            raise HinFormatError(
                f"meta-path {self.name!r} must start and end at target type "
                f"{hin.target_type!r}, got {self.types[0]!r}..{self.types[-1]!r}"
            )
        for t_src, rel, t_dst in zip(self.types, self.relations, self.types[1:]):
            if not hin.schema_has(t_src, rel, t_dst):
                raise HinFormatError(
                    f"meta-path {self.name!r}: step ({t_src}, {rel}, {t_dst}) not in schema"
                )


def metapath_from_spec(spec: dict, hin: Hin) -> MetaPath:
    """Build a MetaPath from a config entry {name, types, relations?}.

    When relations are omitted, each step's relation is inferred from the
    schema; ambiguity (several relations between the same type pair) is an
    error.
    """
    name = spec["name"]
    types = tuple(spec["types"])
    if "relations" in spec and spec["relations"] is not None:
        relations = tuple(spec["relations"])
    else:
        schema = hin.schema
        relations = []
        for t_src, t_dst in zip(types, types[1:]):
            lo, hi = sorted((t_src, t_dst))
            candidates = sorted(r for (a, r, b) in schema if (a, b) == (lo, hi))
            if not candidates:
                raise HinFormatError(
                    f"meta-path {name!r}: no relation between {t_src!r} and {t_dst!r}"
                )
            if len(candidates) > 1:
                raise HinFormatError(
                    f"meta-path {name!r}: ambiguous relation between {t_src!r} and "
                    f"{t_dst!r}: {candidates}; list relations explicitly"
                )
            relations.append(candidates[0])
        relations = tuple(relations)
    mp = MetaPath(name=name, types=types, relations=relations)
    mp.validate(hin)
    return mp


def step_adjacency(hin: Hin, t_src: str, relation: str, t_dst: str) -> sparse.csr_matrix:
    """0/1 adjacency from t_src locals to t_dst locals under one relation.

    Stored edges are undirected, so both orientations of each edge are
    consulted; a same-type edge contributes both (u,v) and (v,u).
    """
    try:
        rel_idx = hin.relation_names.index(relation)
    except ValueError:
        raise HinFormatError(f"unknown relation {relation!r}") from None
    ts = hin.type_index(t_src)
    td = hin.type_index(t_dst)
    n_src = len(hin.members(t_src))
    n_dst = len(hin.members(t_dst))
    e = hin.edges
    if len(e) == 0:
        return sparse.csr_matrix((n_src, n_dst), dtype=np.int64)
    mask = e[:, 0] == rel_idx
    u, v = e[mask, 1], e[mask, 2]
    tu, tv = hin.node_types[u], hin.node_types[v]
    fwd = (tu == ts) & (tv == td)
    rev = (tv == ts) & (tu == td) & (u != v)
    rows = np.concatenate([hin.locals_of(u[fwd]), hin.locals_of(v[rev])])
    cols = np.concatenate([hin.locals_of(v[fwd]), hin.locals_of(u[rev])])
    mat = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n_src, n_dst)
    )
    mat.sum_duplicates()  # dedup upstream guarantees 0/1, this just canonicalizes
    mat.data[:] = 1
    mat.sort_indices()
    return mat


def step_matrices(hin: Hin, mp: MetaPath) -> list[sparse.csr_matrix]:
    """Per-step adjacency matrices along a meta-path."""
    return [
        step_adjacency(hin, t_src, rel, t_dst)
        for t_src, rel, t_dst in zip(mp.types, mp.relations, mp.types[1:])
    ]


def count_paths(hin: Hin, mp: MetaPath) -> sparse.csr_matrix:
    """n_target x n_target matrix of meta-path instance counts (int64 CSR).

    An edgeless network short-circuits to the zero matrix (its derived schema
    is empty, so per-step validation would otherwise reject any meta-path).
    """
    n = hin.n_target
    if len(hin.edges) == 0:
        return sparse.csr_matrix((n, n), dtype=np.int64)
    mp.validate(hin)
    product: sparse.csr_matrix | None = None
    for step in step_matrices(hin, mp):
        product = step if product is None else product @ step
    assert product is not None
    product = product.tocsr()
    product.sum_duplicates()
    product.sort_indices()
    return product


def enumerate_instances(
    hin: Hin,
    mp: MetaPath,
    u: int,
    v: int,
    steps: list[sparse.csr_matrix] | None = None,
) -> list[tuple[int, ...]]:
    """All path instances of ``mp`` from target-local u to target-local v.

    Returns paths as tuples of global node indices, ordered lexicographically
    by the local indices of their nodes. Instances may revisit nodes; the
    count of returned paths equals ``count_paths(hin, mp)[u, v]``. Callers
    enumerating many pairs should precompute ``steps`` once via
    :func:`step_matrices`.
    """
    if steps is None:
        steps = step_matrices(hin, mp)
    members = [hin.members(t) for t in mp.types]
    out: list[tuple[int, ...]] = []
    path: list[int] = [u]

    def walk(depth: int, node: int) -> None:
        if depth == len(steps):
            if node == v:
                out.append(tuple(int(members[i][p]) for i, p in enumerate(path)))
            return
        mat = steps[depth]
        for nxt in mat.indices[mat.indptr[node] : mat.indptr[node + 1]]:
            path.append(int(nxt))
            walk(depth + 1, int(nxt))
            path.pop()

    walk(0, u)
    return out


def pathsim(cm: sparse.spmatrix, u: int, v: int) -> float:
    """Normalized instance-count similarity: 2*c(u,v) / (c(u,u) + c(v,v)).

    Defined as 0 when the denominator is 0 (fully isolated endpoints).
    """
    denom = float(cm[u, u]) + float(cm[v, v])
    if denom == 0.0:
        return 0.0
    return 2.0 * float(cm[u, v]) / denom


@dataclass
class NeighborIndex:
    """Per target node: up to k (neighbor, PathSim score, instance count) rows.

    Each list is sorted by score descending, ties broken by neighbor id
    ascending; a node never lists itself.
    """

    metapath: str
    k: int
    neighbors: list[list[tuple[int, float, int]]]

    @property
    def n(self) -> int:
        return len(self.neighbors)


def top_k_neighbors(
    cm: sparse.spmatrix,
    k: int,
    mode: str = "pathsim",
    seed: int = 0,
    metapath: str = "",
) -> NeighborIndex:
    """Select each node's neighbor list from the count matrix.

    mode="pathsim": the <= k related nodes with the highest PathSim scores.
    mode="random": a seeded uniform sample without replacement from the
    related nodes (the neighbor-filtering ablation); rows are still sorted by
    score for a deterministic index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if mode not in ("pathsim", "random"):
        raise ValueError(f"unknown neighbor selection mode {mode!r}")
    csr = cm.tocsr()
    n = csr.shape[0]
    diag = csr.diagonal()
    rows: list[list[tuple[int, float, int]]] = []
    for x in range(n):
        start, end = csr.indptr[x], csr.indptr[x + 1]
        idx = csr.indices[start:end]
        cnt = csr.data[start:end]
        keep = (idx != x) & (cnt > 0)
        idx, cnt = idx[keep], cnt[keep]
        if len(idx) == 0:
            rows.append([])
            continue
        denom = diag[x] + diag[idx]
        scores = np.where(denom > 0, 2.0 * cnt / np.where(denom > 0, denom, 1), 0.0)
        if mode == "random":
            rng = np.random.default_rng([seed, x])
            take = min(k, len(idx))
            chosen = rng.choice(len(idx), size=take, replace=False)
            idx, cnt, scores = idx[chosen], cnt[chosen], scores[chosen]
        order = np.lexsort((idx, -scores))
        if mode == "pathsim":
            order = order[:k]
        rows.append([(int(idx[j]), float(scores[j]), int(cnt[j])) for j in order])
    return NeighborIndex(metapath=metapath, k=k, neighbors=rows)


def save_neighbor_index(index: NeighborIndex, hin: Hin, path: str | Path) -> None:
    """Write ``node_id <TAB> neighbor_id <TAB> score <TAB> count`` rows."""
    targets = hin.target_nodes
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# metapath={index.metapath} k={index.k}\n")
        for x, row in enumerate(index.neighbors):
            xid = hin.node_ids[int(targets[x])]
            for nbr, score, count in row:
                nid = hin.node_ids[int(targets[nbr])]
                fh.write(f"{xid}\t{nid}\t{float(score)!r}\t{count}\n")


def load_neighbor_index(path: str | Path, hin: Hin, metapath: str, k: int) -> NeighborIndex:
    """Read back a cache file written by :func:`save_neighbor_index`."""
    targets = hin.target_nodes
    local_of = {hin.node_ids[int(g)]: i for i, g in enumerate(targets)}
    rows: list[list[tuple[int, float, int]]] = [[] for _ in range(len(targets))]
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise HinFormatError(f"{path}:{lineno}: expected 4 fields")
            xid, nid, score, count = fields
            rows[local_of[xid]].append((local_of[nid], float(score), int(count)))
    return NeighborIndex(metapath=metapath, k=k, neighbors=rows)
