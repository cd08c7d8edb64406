"""Planted-partition synthetic networks for desk-scale end-to-end runs.

Target nodes carry planted class labels. Auxiliary type 0 is informative:
pairs of same-class targets are connected through shared witness nodes with
probability ``p_intra`` while cross-class pairs connect with probability
``noise``. Connected same-class pairs receive 1 + Poisson(1) witnesses
versus a single witness for cross-class pairs, so instance-count similarity
ranks same-class neighbors on top. The spread of witness counts also keeps
each node's top-k picks diverse, so the per-object context budget fills
near-proportionally to k at every k. Remaining auxiliary types are wired
class-blind at a matched density, giving meta-paths that carry no label
signal.

The generator also emits a stratified split and a ready-to-run config.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

TARGET_TYPE = "item"


def metapath_specs(context_types: int) -> list[dict]:
    """Config entries for the per-auxiliary-type meta-paths P1, P2, ..."""
    return [
        {
            "name": f"P{t + 1}",
            "types": [TARGET_TYPE, f"aux{t}", TARGET_TYPE],
            "relations": [f"via{t}", f"via{t}"],
        }
        for t in range(context_types)
    ]


def gen_synthetic(
    out_dir: str | Path,
    classes: int = 4,
    per_class: int = 50,
    context_types: int = 2,
    noise: float = 0.05,
    p_intra: float = 0.3,
    seed: int = 0,
    train_frac: float = 0.1,
    val_frac: float = 0.1,
) -> dict[str, str]:
    """Write a synthetic dataset and return the emitted file paths.

    Identical arguments produce byte-identical files.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if context_types < 1:
        raise ValueError(f"need at least 1 context type, got {context_types}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    n = classes * per_class
    labels = np.arange(n) // per_class
    iu, jv = np.triu_indices(n, k=1)
    same = labels[iu] == labels[jv]
    # matched expected degree for the class-blind types
    blind_rate = (p_intra * (per_class - 1) + noise * (n - per_class)) / max(n - 1, 1)

    node_lines = [f"I{i}\t{TARGET_TYPE}" for i in range(n)]
    edge_lines: list[str] = []
    for t in range(context_types):
        if t == 0:
            prob = np.where(same, p_intra, noise)
        else:
            prob = np.full(len(iu), blind_rate)
        connected = rng.random(len(iu)) < prob
        sel = np.flatnonzero(connected)
        extra = rng.poisson(1.0, size=len(sel))
        if t == 0:
            witnesses = np.where(same[sel], 1 + extra, 1)
        else:
            witnesses = 1 + extra
        aux_count = 0
        for pair_pos, w in zip(sel, witnesses):
            u, v = int(iu[pair_pos]), int(jv[pair_pos])
            for _ in range(int(w)):
                aux_id = f"A{t}_{aux_count}"
                aux_count += 1
                node_lines.append(f"{aux_id}\taux{t}")
                edge_lines.append(f"via{t}\t{aux_id}\tI{u}")
                edge_lines.append(f"via{t}\t{aux_id}\tI{v}")

    label_lines = [f"I{i}\tclass{int(labels[i])}" for i in range(n)]

    split_lines: list[str] = []
    for c in range(classes):
        members = np.flatnonzero(labels == c)
        order = rng.permutation(members)
        n_train = max(1, int(round(train_frac * per_class)))
        n_val = max(1, int(round(val_frac * per_class)))
        for i in order[:n_train]:
            split_lines.append(f"I{int(i)}\ttrain")
        for i in order[n_train : n_train + n_val]:
            split_lines.append(f"I{int(i)}\tval")
        for i in order[n_train + n_val :]:
            split_lines.append(f"I{int(i)}\ttest")

    paths = {
        "nodes": str(out / "nodes.tsv"),
        "edges": str(out / "edges.tsv"),
        "labels": str(out / "labels.tsv"),
        "split": str(out / "split.tsv"),
        "config": str(out / "run.json"),
    }
    Path(paths["nodes"]).write_text("\n".join(node_lines) + "\n", encoding="utf-8")
    Path(paths["edges"]).write_text("\n".join(edge_lines) + "\n", encoding="utf-8")
    Path(paths["labels"]).write_text("\n".join(label_lines) + "\n", encoding="utf-8")
    Path(paths["split"]).write_text("\n".join(split_lines) + "\n", encoding="utf-8")

    # paths are stored relative to run.json, so the dataset directory can be
    # moved freely. Training settings are sized for these desk-scale
    # instances: a light dropout and a long patience let the contrastive term
    # keep improving validation accuracy well after the supervised loss has
    # converged.
    config = {
        "dataset": {
            "nodes": "nodes.tsv",
            "edges": "edges.tsv",
            "labels": "labels.tsv",
            "split": "split.tsv",
        },
        "metapaths": metapath_specs(context_types),
        "embedding_dim": 32,
        "model": {
            "layers": 2,
            "dim": 32,
            "classifier_hidden": 32,
            "attention_dim": 32,
            "dropout": 0.15,
            "leaky_slope": 0.2,
            "ss_weight": 0.1,
            "k": 5,
        },
        "optimizer": {"lr": 0.004, "weight_decay": 0.0005, "beta2": 0.99},
        "training": {"max_epochs": 2000, "patience": 700, "seed": seed},
        "cache_dir": "cache",
        "output_dir": "runs",
    }
    Path(paths["config"]).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
