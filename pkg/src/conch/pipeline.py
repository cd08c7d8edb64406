"""Run orchestration: cached preprocessing, the training loop with early
stopping, evaluation, and the PathSim debug query.

Preprocessing artifacts (embeddings, neighbor indexes, context graphs) are
cached per meta-path under ``cache_dir``, keyed by a content hash of their
actual inputs, so re-running ``prepare`` with unchanged inputs loads from
disk and changing one knob (say k) recomputes only what depends on it.

Everything downstream of a (config, seed) pair is deterministic on a single
thread; ``metrics.json`` deliberately excludes wall-clock numbers so repeated
runs are byte-identical, and timings land in ``timings.json`` instead.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import contexts as ctx
from . import metapaths as mpath
from .autodiff import NonFiniteError, backward
from .hin import Hin, Split, load_hin, load_split, one_hot_fallback_features
from .metrics import macro_f1, micro_f1
from .model import ConchModel, ForwardResult, ModelConfig
from .optim import Adam, load_checkpoint, restore_parameters, save_checkpoint

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A run failed: bad configuration, missing artifact, or diverged training."""


@dataclass
class RunConfig:
    """Everything one run needs; serializable to/from JSON."""

    nodes: str
    edges: str
    labels: str
    split: str
    metapaths: list[dict]
    features: str | None = None
    embeddings: str | None = None
    target_type: str | None = None
    embedding_dim: int = 128
    # model
    layers: int = 2
    dim: int = 128
    classifier_hidden: int = 64
    attention_dim: int = 128
    dropout: float = 0.5
    leaky_slope: float = 0.2
    ss_weight: float = 0.1
    k: int = 5
    random_neighbors: bool = False
    supervised_only: bool = False
    # optimizer
    lr: float = 0.001
    weight_decay: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # training
    max_epochs: int = 1000
    patience: int = 100
    seed: int = 0
    cache_dir: str = "cache"
    output_dir: str = "runs"

    @staticmethod
    def from_dict(raw: dict, base: Path | None = None) -> "RunConfig":
        def resolve(p: str | None) -> str | None:
            if p is None:
                return None
            path = Path(p)
            if base is not None and not path.is_absolute():
                path = base / path
            return str(path)

        data = raw.get("dataset", {})
        model = raw.get("model", {})
        optim = raw.get("optimizer", {})
        training = raw.get("training", {})
        try:
            cfg = RunConfig(
                nodes=resolve(data["nodes"]),
                edges=resolve(data["edges"]),
                labels=resolve(data["labels"]),
                split=resolve(data["split"]),
                features=resolve(data.get("features")),
                embeddings=resolve(data.get("embeddings")),
                target_type=raw.get("target_type"),
                metapaths=raw["metapaths"],
                embedding_dim=int(raw.get("embedding_dim", 128)),
                layers=int(model.get("layers", 2)),
                dim=int(model.get("dim", 128)),
                classifier_hidden=int(model.get("classifier_hidden", 64)),
                attention_dim=int(model.get("attention_dim", 128)),
                dropout=float(model.get("dropout", 0.5)),
                leaky_slope=float(model.get("leaky_slope", 0.2)),
                ss_weight=float(model.get("ss_weight", 0.1)),
                k=int(model.get("k", 5)),
                random_neighbors=bool(model.get("random_neighbors", False)),
                supervised_only=bool(model.get("supervised_only", False)),
                lr=float(optim.get("lr", 0.001)),
                weight_decay=float(optim.get("weight_decay", 0.0005)),
                beta1=float(optim.get("beta1", 0.9)),
                beta2=float(optim.get("beta2", 0.999)),
                eps=float(optim.get("eps", 1e-8)),
                max_epochs=int(training.get("max_epochs", 1000)),
                patience=int(training.get("patience", 100)),
                seed=int(training.get("seed", 0)),
                cache_dir=resolve(raw.get("cache_dir", "cache")),
                output_dir=resolve(raw.get("output_dir", "runs")),
            )
        except KeyError as exc:
            raise PipelineError(f"config is missing required key: {exc}") from None
        if not cfg.metapaths:
            raise PipelineError("config lists no meta-paths")
        return cfg

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: invalid JSON ({exc})") from None
        return RunConfig.from_dict(raw, base=path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": {
                "nodes": self.nodes,
                "edges": self.edges,
                "labels": self.labels,
                "split": self.split,
                "features": self.features,
                "embeddings": self.embeddings,
            },
            "target_type": self.target_type,
            "metapaths": self.metapaths,
            "embedding_dim": self.embedding_dim,
            "model": {
                "layers": self.layers,
                "dim": self.dim,
                "classifier_hidden": self.classifier_hidden,
                "attention_dim": self.attention_dim,
                "dropout": self.dropout,
                "leaky_slope": self.leaky_slope,
                "ss_weight": self.ss_weight,
                "k": self.k,
                "random_neighbors": self.random_neighbors,
                "supervised_only": self.supervised_only,
            },
            "optimizer": {
                "lr": self.lr,
                "weight_decay": self.weight_decay,
                "beta1": self.beta1,
                "beta2": self.beta2,
                "eps": self.eps,
            },
            "training": {
                "max_epochs": self.max_epochs,
                "patience": self.patience,
                "seed": self.seed,
            },
            "cache_dir": self.cache_dir,
            "output_dir": self.output_dir,
        }


@dataclass
class Prepared:
    """In-memory preprocessing artifacts for one configuration."""

    hin: Hin
    features: np.ndarray  # (n_target, d_f)
    embeddings: np.ndarray  # (n_nodes, d_e)
    metapaths: list[mpath.MetaPath]
    indexes: dict[str, mpath.NeighborIndex]
    graphs: dict[str, ctx.ContextGraph]


@dataclass
class MetricsReport:
    """Evaluation results plus training curves.

    Wall-clock numbers are kept out of :meth:`to_json_dict` so that
    metrics.json is byte-identical across identical runs; they are written
    separately.
    """

    micro_f1: float
    macro_f1: float
    best_epoch: int
    best_val_accuracy: float
    epochs_run: int
    loss_total: list[float]
    loss_supervised: list[float]
    loss_selfsup: list[float]
    val_accuracy: list[float]
    attention_mean: dict[str, float]
    discriminator_accuracy: float | None
    wall_clock_per_epoch: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "epochs_run": self.epochs_run,
            "loss_total": self.loss_total,
            "loss_supervised": self.loss_supervised,
            "loss_selfsup": self.loss_selfsup,
            "val_accuracy": self.val_accuracy,
            "attention_mean": self.attention_mean,
            "discriminator_accuracy": self.discriminator_accuracy,
        }


# --- cached preprocessing ---------------------------------------------------


def _hash_parts(*parts: object) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def _hash_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_manifest(cache_dir: Path) -> dict:
    manifest = cache_dir / "manifest.json"
    if manifest.exists():
        return json.loads(manifest.read_text(encoding="utf-8"))
    return {}


def _store_manifest(cache_dir: Path, manifest: dict) -> None:
    (cache_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def prepare(config: RunConfig) -> Prepared:
    """Load the network and build (or reuse) all preprocessing artifacts."""
    hin = load_hin(
        config.nodes,
        config.edges,
        config.labels,
        feature_file=config.features,
        target_type=config.target_type,
    )
    features = hin.features if hin.features is not None else one_hot_fallback_features(hin)
    metapaths = [mpath.metapath_from_spec(spec, hin) for spec in config.metapaths]

    cache_dir = Path(config.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(cache_dir)
    graph_hash = (_hash_file(config.nodes), _hash_file(config.edges))

    # embeddings: from file, or the structural fallback
    mp_types = sorted({t for mp in metapaths for t in mp.types})
    if config.embeddings is not None:
        emb_key = _hash_parts("file-embeddings", graph_hash, _hash_file(config.embeddings), mp_types)
    else:
        emb_key = _hash_parts("structural", graph_hash, config.embedding_dim, config.seed)
    emb_path = cache_dir / "embeddings.tsv"
    if manifest.get("embeddings") == emb_key and emb_path.exists():
        logger.info("cache hit: embeddings")
        embeddings = ctx.load_embeddings(emb_path, hin, required_types=set(mp_types))
    else:
        if config.embeddings is not None:
            embeddings = ctx.load_embeddings(config.embeddings, hin, required_types=set(mp_types))
        else:
            embeddings = ctx.structural_embeddings(hin, config.embedding_dim, config.seed)
        ctx.save_embeddings(embeddings, hin, emb_path)
        manifest["embeddings"] = emb_key
        logger.info("computed embeddings (d_e=%d)", embeddings.shape[1])

    mode = "random" if config.random_neighbors else "pathsim"
    indexes: dict[str, mpath.NeighborIndex] = {}
    graphs: dict[str, ctx.ContextGraph] = {}
    manifest.setdefault("neighbors", {})
    manifest.setdefault("contexts", {})
    for mp in metapaths:
        nbr_key = _hash_parts(
            "neighbors", graph_hash, hin.target_type, mp.name, mp.types, mp.relations,
            config.k, mode, config.seed,
        )
        nbr_path = cache_dir / f"neighbors.{mp.name}.tsv"
        if manifest["neighbors"].get(mp.name) == nbr_key and nbr_path.exists():
            logger.info("cache hit: neighbors for %s", mp.name)
            index = mpath.load_neighbor_index(nbr_path, hin, mp.name, config.k)
        else:
            cm = mpath.count_paths(hin, mp)
            index = mpath.top_k_neighbors(cm, config.k, mode=mode, seed=config.seed, metapath=mp.name)
            mpath.save_neighbor_index(index, hin, nbr_path)
            manifest["neighbors"][mp.name] = nbr_key
            logger.info("computed neighbor index for %s", mp.name)
        indexes[mp.name] = index

        ctx_key = _hash_parts("contexts", nbr_key, emb_key)
        ctx_path = cache_dir / f"contexts.{mp.name}.tsv"
        if manifest["contexts"].get(mp.name) == ctx_key and ctx_path.exists():
            logger.info("cache hit: contexts for %s", mp.name)
            graph = ctx.load_context_graph(ctx_path, hin, mp.name)
        else:
            graph = ctx.build_context_graph(hin, mp, index, embeddings)
            ctx.save_context_graph(graph, hin, ctx_path)
            manifest["contexts"][mp.name] = ctx_key
            logger.info("built context graph for %s (%d contexts)", mp.name, graph.n_contexts)
        graphs[mp.name] = graph

    _store_manifest(cache_dir, manifest)
    return Prepared(
        hin=hin,
        features=features,
        embeddings=embeddings,
        metapaths=metapaths,
        indexes=indexes,
        graphs=graphs,
    )


# --- training ----------------------------------------------------------------


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _model_config(config: RunConfig, prepared: Prepared) -> ModelConfig:
    return ModelConfig(
        metapaths=[mp.name for mp in prepared.metapaths],
        n_classes=prepared.hin.n_labels,
        feature_dim=prepared.features.shape[1],
        context_dim=prepared.embeddings.shape[1],
        layers=config.layers,
        dim=config.dim,
        classifier_hidden=config.classifier_hidden,
        attention_dim=config.attention_dim,
        dropout=config.dropout,
        leaky_slope=config.leaky_slope,
        ss_weight=config.ss_weight,
        k=config.k,
        random_neighbors=config.random_neighbors,
        supervised_only=config.supervised_only,
    )


def _corrupted_features(
    features: np.ndarray, metapaths: list[str], seed: int, epoch: int
) -> dict[str, np.ndarray]:
    return {
        name: ctx.corrupt_features(features, _derived_seed(seed, 101, epoch, i))
        for i, name in enumerate(metapaths)
    }


def _accuracy(predictions: np.ndarray, labels: np.ndarray, idx: tuple[int, ...]) -> float:
    idx = np.asarray(idx, dtype=np.int64)
    return float(np.mean(predictions[idx] == labels[idx]))


class EarlyStopper:
    """Stop once the tracked value has not improved for `patience` epochs.

    Only strict improvement resets the counter, so the remembered best epoch
    is the first one to achieve the best value.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch's value; returns True when training should stop."""
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def run_epoch(
    model: ConchModel,
    optimizer: Adam,
    prepared: Prepared,
    labels: np.ndarray,
    train_idx: np.ndarray,
    config: RunConfig,
    epoch: int,
) -> ForwardResult:
    """One full-batch training step (forward, backward, update)."""
    corrupted = None
    if not config.supervised_only:
        corrupted = _corrupted_features(
            prepared.features, [mp.name for mp in prepared.metapaths], config.seed, epoch
        )
    rng = np.random.default_rng([config.seed, 202, epoch])
    result = model.forward_full(
        prepared.graphs,
        prepared.features,
        corrupted,
        labels,
        train_idx,
        weight_decay=config.weight_decay,
        train=True,
        rng=rng,
    )
    optimizer.zero_grad()
    backward(result.loss, model.parameters())
    optimizer.step()
    return result


def train(config: RunConfig) -> tuple[MetricsReport, str]:
    """Full training run; returns the report and the checkpoint path.

    Early stopping: training halts once validation accuracy has not improved
    for ``patience`` consecutive epochs, and the first checkpoint achieving
    the best validation accuracy is restored before final evaluation.
    """
    if config.max_epochs < 1:
        raise PipelineError(f"max_epochs must be >= 1, got {config.max_epochs}")
    prepared = prepare(config)
    hin = prepared.hin
    split = load_split(config.split, hin)
    if not split.train:
        raise PipelineError("training split is empty")
    if not split.validation:
        raise PipelineError("validation split is empty (needed for early stopping)")
    labels = hin.label_array()
    train_idx = np.asarray(split.train, dtype=np.int64)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    model = ConchModel(_model_config(config, prepared), seed=config.seed)
    optimizer = Adam(
        model.parameters(),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=0.0,  # the L2 penalty is part of the loss graph
    )

    loss_total: list[float] = []
    loss_sup: list[float] = []
    loss_ss: list[float] = []
    val_curve: list[float] = []
    wall: list[float] = []
    stopper = EarlyStopper(config.patience)
    best_state: dict[str, np.ndarray] | None = None
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        try:
            result = run_epoch(model, optimizer, prepared, labels, train_idx, config, epoch)
            eval_result = model.forward_full(
                prepared.graphs, prepared.features, None, labels, train_idx, train=False
            )
        except NonFiniteError as exc:
            dump = {
                "epoch": epoch,
                "loss_total": loss_total,
                "loss_supervised": loss_sup,
                "loss_selfsup": loss_ss,
                "val_accuracy": val_curve,
                "error": str(exc),
            }
            (out_dir / "diagnostic.json").write_text(
                json.dumps(dump, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            raise PipelineError(
                f"non-finite loss at epoch {epoch}: {exc}; diagnostics in {out_dir / 'diagnostic.json'}"
            ) from exc
        epochs_run = epoch
        loss_total.append(float(result.loss.data))
        loss_sup.append(float(result.sup_loss.data))
        loss_ss.append(float(result.ss_loss.data) if result.ss_loss is not None else 0.0)

        val_acc = _accuracy(eval_result.predictions, labels, split.validation)
        val_curve.append(val_acc)
        wall.append(time.perf_counter() - started)

        improved = val_acc > stopper.best
        should_stop = stopper.update(epoch, val_acc)
        if improved:
            best_state = {p.name: p.data.copy() for p in model.parameters()}
        logger.debug(
            "epoch %d: loss=%.4f sup=%.4f ss=%.4f val_acc=%.4f",
            epoch, loss_total[-1], loss_sup[-1], loss_ss[-1], val_acc,
        )
        if should_stop:
            logger.info("early stop at epoch %d (best epoch %d)", epoch, stopper.best_epoch)
            break

    best_epoch = stopper.best_epoch
    best_acc = stopper.best
    assert best_state is not None
    for p in model.parameters():
        p.data = best_state[p.name].copy()

    checkpoint_path = out_dir / "checkpoint.bin"
    save_checkpoint(model.parameters(), checkpoint_path)

    report = _final_report(model, prepared, labels, split, config)
    report.best_epoch = best_epoch
    report.best_val_accuracy = best_acc
    report.epochs_run = epochs_run
    report.loss_total = loss_total
    report.loss_supervised = loss_sup
    report.loss_selfsup = loss_ss
    report.val_accuracy = val_curve
    report.wall_clock_per_epoch = wall

    _write_outputs(report, prepared, model, labels, split, config, out_dir)
    return report, str(checkpoint_path)


def _final_report(
    model: ConchModel,
    prepared: Prepared,
    labels: np.ndarray,
    split: Split,
    config: RunConfig,
) -> MetricsReport:
    """Evaluate the current parameters on the test split."""
    if not split.test:
        raise PipelineError("test split is empty")
    train_idx = np.asarray(split.train, dtype=np.int64)
    corrupted = None
    if not config.supervised_only:
        corrupted = _corrupted_features(
            prepared.features, [mp.name for mp in prepared.metapaths], config.seed, 0
        )
    result = model.forward_full(
        prepared.graphs, prepared.features, corrupted, labels, train_idx, train=False
    )
    test_idx = np.asarray(split.test, dtype=np.int64)
    preds = result.predictions
    disc_acc: float | None = None
    if result.pos_prob is not None and result.neg_prob is not None:
        hits = float(np.sum(result.pos_prob > 0.5) + np.sum(result.neg_prob <= 0.5))
        disc_acc = hits / (len(result.pos_prob) + len(result.neg_prob))
    mp_names = [mp.name for mp in prepared.metapaths]
    attention_mean = {
        name: float(result.attention[:, q].mean()) for q, name in enumerate(mp_names)
    }
    return MetricsReport(
        micro_f1=micro_f1(labels[test_idx], preds[test_idx]),
        macro_f1=macro_f1(labels[test_idx], preds[test_idx], prepared.hin.n_labels),
        best_epoch=0,
        best_val_accuracy=0.0,
        epochs_run=0,
        loss_total=[],
        loss_supervised=[],
        loss_selfsup=[],
        val_accuracy=[],
        attention_mean=attention_mean,
        discriminator_accuracy=disc_acc,
    )


def _write_outputs(
    report: MetricsReport,
    prepared: Prepared,
    model: ConchModel,
    labels: np.ndarray,
    split: Split,
    config: RunConfig,
    out_dir: Path,
) -> None:
    (out_dir / "metrics.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "timings.json").write_text(
        json.dumps({"wall_clock_per_epoch": report.wall_clock_per_epoch}, indent=2) + "\n",
        encoding="utf-8",
    )
    # attention weights of the final (restored) parameters, eval mode
    train_idx = np.asarray(split.train, dtype=np.int64)
    result = model.forward_full(
        prepared.graphs, prepared.features, None, labels, train_idx, train=False
    )
    hin = prepared.hin
    targets = hin.target_nodes
    mp_names = [mp.name for mp in prepared.metapaths]
    with open(out_dir / "attention.tsv", "w", encoding="utf-8") as fh:
        for x in range(hin.n_target):
            nid = hin.node_ids[int(targets[x])]
            for q, name in enumerate(mp_names):
                fh.write(f"{nid}\t{name}\t{float(result.attention[x, q])!r}\n")
    logger.info(
        "test micro-F1 %.4f macro-F1 %.4f (best val %.4f @ epoch %d)",
        report.micro_f1, report.macro_f1, report.best_val_accuracy, report.best_epoch,
    )


def evaluate(config: RunConfig, checkpoint: str | Path, split_name: str = "test") -> MetricsReport:
    """Score a saved checkpoint on one partition of the split."""
    prepared = prepare(config)
    split = load_split(config.split, prepared.hin)
    idx = {"train": split.train, "val": split.validation, "test": split.test}.get(split_name)
    if idx is None:
        raise PipelineError(f"unknown split partition {split_name!r}")
    if not idx:
        raise PipelineError(f"{split_name} split is empty")
    if not split.train:
        raise PipelineError("training split is empty")
    model = ConchModel(_model_config(config, prepared), seed=config.seed)
    restore_parameters(model.parameters(), load_checkpoint(checkpoint))
    labels = prepared.hin.label_array()
    adjusted = Split(train=split.train, validation=split.validation, test=tuple(idx))
    return _final_report(model, prepared, labels, adjusted, config)


def pathsim_query(config: RunConfig, metapath: str, node_id: str) -> list[tuple[str, float, int]]:
    """Neighbor list of one node under one meta-path, score-descending."""
    prepared = prepare(config)
    hin = prepared.hin
    if metapath not in prepared.indexes:
        raise PipelineError(
            f"meta-path {metapath!r} is not configured (have: {sorted(prepared.indexes)})"
        )
    node = hin.node(node_id)
    if hin.type_of(node) != hin.target_type:
        raise PipelineError(f"node {node_id!r} is not of target type {hin.target_type!r}")
    targets = hin.target_nodes
    row = prepared.indexes[metapath].neighbors[hin.local(node)]
    return [(hin.node_ids[int(targets[nbr])], score, count) for nbr, score, count in row]
