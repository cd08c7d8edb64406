"""Context feature construction and per-meta-path object/context bipartite graphs.

A context is one unordered pair of target objects together with the set of
meta-path instances connecting them; its feature vector is the mean over
those instances of the mean of the instance's node embeddings. Initial node
embeddings either come from a file (e.g. produced by an external HIN
embedding tool) or from a deterministic structural fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hin import Hin, HinFormatError
from .metapaths import MetaPath, NeighborIndex, enumerate_instances, step_matrices


def load_embeddings(
    file: str | Path,
    hin: Hin,
    required_types: set[str] | None = None,
) -> np.ndarray:
    """Load per-node embeddings: ``node_id <TAB> v1,v2,...,vd``.

    Returns an (n_nodes, d_e) matrix indexed by global node index. Every node
    must have a row (restrict with ``required_types`` to only the node types
    that actually appear on meta-paths); missing nodes and inconsistent
    dimensions are errors.
    """
    vectors: dict[int, np.ndarray] = {}
    dim: int | None = None
    with open(file, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise HinFormatError(f"{file}:{lineno}: expected 2 tab-separated fields")
            nid, csv = fields
            node = hin.node(nid)
            try:
                vec = np.asarray([float(tok) for tok in csv.split(",")], dtype=np.float64)
            except ValueError as exc:
                raise HinFormatError(f"{file}:{lineno}: bad embedding value ({exc})") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise HinFormatError(
                    f"{file}:{lineno}: embedding dimension {len(vec)} != {dim} seen earlier"
                )
            vectors[node] = vec
    if dim is None:
        raise HinFormatError(f"{file}: no embedding rows")
    out = np.zeros((hin.n_nodes, dim), dtype=np.float64)
    missing = []
    for node in range(hin.n_nodes):
        if required_types is not None and hin.type_of(node) not in required_types:
            continue
        if node not in vectors:
            missing.append(hin.node_ids[node])
        else:
            out[node] = vectors[node]
    if missing:
        shown = ", ".join(missing[:5])
        raise HinFormatError(f"{file}: missing embeddings for {len(missing)} node(s): {shown}...")
    if not np.isfinite(out).all():
        raise HinFormatError(f"{file}: embeddings contain non-finite values")
    return out


def save_embeddings(emb: np.ndarray, hin: Hin, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node in range(hin.n_nodes):
            csv = ",".join(repr(float(x)) for x in emb[node])
            fh.write(f"{hin.node_ids[node]}\t{csv}\n")


# projection magnitude for the fallback embeddings: large enough to give
# contexts distinct initial states, small enough not to drown the learned
# message signal when object features are one-hot
_PROJECTION_SCALE = 0.3


def structural_embeddings(hin: Hin, d_e: int, seed: int) -> np.ndarray:
    """Deterministic fallback embeddings from typed-degree profiles.

    Each node's profile counts its neighbors per (relation, neighbor type)
    bucket; columns are scaled to [0, 1] by their maximum and projected with
    a seeded Gaussian matrix. Nodes with identical typed degrees map to
    identical vectors.
    """
    if d_e < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {d_e}")
    buckets: dict[tuple[str, str], int] = {}
    for t1, rel, t2 in sorted(hin.schema):
        for t_other in (t2, t1):
            key = (rel, t_other)
            if key not in buckets:
                buckets[key] = len(buckets)
    n_buckets = max(len(buckets), 1)
    lookup = np.zeros((len(hin.relation_names), len(hin.type_names)), dtype=np.int64)
    for (rel, t_other), b in buckets.items():
        lookup[hin.relation_names.index(rel), hin.type_index(t_other)] = b
    profile = np.zeros((hin.n_nodes, n_buckets), dtype=np.float64)
    if len(hin.edges):
        rels, us, vs = hin.edges[:, 0], hin.edges[:, 1], hin.edges[:, 2]
        np.add.at(profile, (us, lookup[rels, hin.node_types[vs]]), 1.0)
        mask = us != vs
        np.add.at(
            profile,
            (vs[mask], lookup[rels[mask], hin.node_types[us[mask]]]),
            1.0,
        )
    col_max = profile.max(axis=0)
    col_max[col_max == 0] = 1.0
    profile /= col_max
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((n_buckets, d_e)) * _PROJECTION_SCALE
    return profile @ projection


def instance_embedding(instance: tuple[int, ...], emb: np.ndarray) -> np.ndarray:
    """Mean of the node embeddings along one path instance."""
    return emb[list(instance)].mean(axis=0)


def context_feature(instances: list[tuple[int, ...]], emb: np.ndarray) -> np.ndarray:
    """Mean over a context's instances of their instance embeddings."""
    if not instances:
        raise ValueError("context_feature: empty instance list")
    rows = np.stack([instance_embedding(p, emb) for p in instances])
    return rows.mean(axis=0)


@dataclass
class ContextGraph:
    """Bipartite graph between target objects and their meta-path contexts.

    Context j links objects ``u_index[j]`` and ``v_index[j]`` (target-local,
    u < v); ``features[j]`` is its precomputed feature vector and
    ``counts[j]`` its instance count. Context features are constants of the
    graph: the corrupted (negative) branch reuses them unchanged.
    """

    metapath: str
    n_objects: int
    u_index: np.ndarray  # (C,) int64
    v_index: np.ndarray  # (C,) int64
    counts: np.ndarray  # (C,) int64
    features: np.ndarray  # (C, d_e) float64

    @property
    def n_contexts(self) -> int:
        return len(self.u_index)

    def edges(self) -> list[tuple[int, int]]:
        """(object, context) incidence pairs; every context appears twice."""
        out = []
        for j in range(self.n_contexts):
            out.append((int(self.u_index[j]), j))
            out.append((int(self.v_index[j]), j))
        return out

    def object_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_objects, dtype=np.int64)
        np.add.at(deg, self.u_index, 1)
        np.add.at(deg, self.v_index, 1)
        return deg


def build_context_graph(
    hin: Hin,
    mp: MetaPath,
    index: NeighborIndex,
    emb: np.ndarray,
) -> ContextGraph:
    """Build the object/context bipartite graph for one meta-path.

    Candidate pairs are the symmetrized union of the top-k lists ({u,v} is a
    candidate when either endpoint selected the other). Pairs are admitted in
    score-descending order subject to a per-object budget of k incident
    contexts, so the object-degree bound holds even when the top-k relation
    is asymmetric. Each admitted pair becomes exactly one context whose
    feature is computed over the enumerated instances between the endpoints.
    """
    n = index.n
    k = index.k
    candidates: dict[tuple[int, int], tuple[float, int]] = {}
    for x, row in enumerate(index.neighbors):
        for nbr, score, count in row:
            key = (x, nbr) if x < nbr else (nbr, x)
            prev = candidates.get(key)
            if prev is None or score > prev[0]:
                candidates[key] = (score, count)
    ordered = sorted(candidates.items(), key=lambda kv: (-kv[1][0], kv[0]))
    degree = np.zeros(n, dtype=np.int64)
    kept: list[tuple[int, int, int]] = []
    for (u, v), (_score, count) in ordered:
        if degree[u] >= k or degree[v] >= k:
            continue
        degree[u] += 1
        degree[v] += 1
        kept.append((u, v, count))
    kept.sort()

    steps = step_matrices(hin, mp)
    d_e = emb.shape[1]
    u_idx = np.asarray([p[0] for p in kept], dtype=np.int64)
    v_idx = np.asarray([p[1] for p in kept], dtype=np.int64)
    counts = np.zeros(len(kept), dtype=np.int64)
    features = np.zeros((len(kept), d_e), dtype=np.float64)
    for j, (u, v, _count) in enumerate(kept):
        instances = enumerate_instances(hin, mp, u, v, steps=steps)
        if not instances:
            # non-palindromic meta-path related v to u only; use that direction
            instances = enumerate_instances(hin, mp, v, u, steps=steps)
        counts[j] = len(instances)
        features[j] = context_feature(instances, emb)
    return ContextGraph(
        metapath=mp.name,
        n_objects=n,
        u_index=u_idx,
        v_index=v_idx,
        counts=counts,
        features=features,
    )


def corrupt_features(features: np.ndarray, seed: int) -> np.ndarray:
    """Row-shuffled copy of an object feature matrix (negative-sample input).

    The permutation is a seeded uniform draw; the multiset of rows is
    preserved and the graph topology is reused unchanged by callers.
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(features.shape[0])
    return features[perm]


def save_context_graph(graph: ContextGraph, hin: Hin, path: str | Path) -> None:
    """Write ``u <TAB> v <TAB> instance_count <TAB> feature-csv`` rows."""
    targets = hin.target_nodes
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# metapath={graph.metapath} contexts={graph.n_contexts}\n")
        for j in range(graph.n_contexts):
            uid = hin.node_ids[int(targets[graph.u_index[j]])]
            vid = hin.node_ids[int(targets[graph.v_index[j]])]
            csv = ",".join(repr(float(x)) for x in graph.features[j])
            fh.write(f"{uid}\t{vid}\t{int(graph.counts[j])}\t{csv}\n")


def load_context_graph(path: str | Path, hin: Hin, metapath: str) -> ContextGraph:
    """Read back a cache file written by :func:`save_context_graph`."""
    targets = hin.target_nodes
    local_of = {hin.node_ids[int(g)]: i for i, g in enumerate(targets)}
    u_idx: list[int] = []
    v_idx: list[int] = []
    counts: list[int] = []
    feats: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise HinFormatError(f"{path}:{lineno}: expected 4 fields")
            uid, vid, count, csv = fields
            u_idx.append(local_of[uid])
            v_idx.append(local_of[vid])
            counts.append(int(count))
            feats.append(np.asarray([float(t) for t in csv.split(",")], dtype=np.float64))
    n = len(targets)
    d_e = len(feats[0]) if feats else 0
    return ContextGraph(
        metapath=metapath,
        n_objects=n,
        u_index=np.asarray(u_idx, dtype=np.int64),
        v_index=np.asarray(v_idx, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        features=np.stack(feats) if feats else np.zeros((0, d_e)),
    )
