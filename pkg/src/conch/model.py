"""The classification model: per-meta-path object/context convolution, attention
fusion across meta-paths, classifier head, and the joint supervised +
contrastive objective.

One parameter set serves every meta-path and both the positive branch and the
corrupted (negative) branch. Within a layer the updates run in sequence:
context states are refreshed from the previous object and context states, and
the object update then aggregates the refreshed context states. Objects
therefore receive neighbor information after a single layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .contexts import ContextGraph
from .optim import glorot_init


@dataclass
class ModelConfig:
    metapaths: list[str]
    n_classes: int
    feature_dim: int  # object feature width (d_f)
    context_dim: int  # context feature width (d_e)
    layers: int = 2
    dim: int = 128  # object/context embedding width after layer 0
    classifier_hidden: int = 64
    attention_dim: int = 128
    dropout: float = 0.5
    leaky_slope: float = 0.2
    ss_weight: float = 0.1  # weight of the contrastive term in the joint loss
    k: int = 5
    random_neighbors: bool = False  # ablation: sample neighbors instead of top-k
    supervised_only: bool = False  # ablation: drop the contrastive term

    def __post_init__(self) -> None:
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.ss_weight < 0:
            raise ValueError(f"ss_weight must be >= 0, got {self.ss_weight}")
        for name in ("dim", "classifier_hidden", "attention_dim", "feature_dim", "context_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.metapaths:
            raise ValueError("need at least one meta-path")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")


@dataclass
class ForwardResult:
    """Everything one joint forward pass produces."""

    embeddings: Tensor  # (n, d) positive-branch final embeddings
    embeddings_neg: Tensor | None
    class_scores: Tensor  # (n, r)
    attention: np.ndarray  # (n, |metapaths|), rows sum to 1
    attention_neg: np.ndarray | None
    sup_loss: Tensor
    ss_loss: Tensor | None
    loss: Tensor
    pos_prob: np.ndarray | None  # discriminator probability on positives
    neg_prob: np.ndarray | None

    @property
    def predictions(self) -> np.ndarray:
        """Predicted labels: row argmax, lowest index wins ties."""
        return np.argmax(self.class_scores.data, axis=1)


class ConchModel:
    """Holds the parameters and implements the forward computations."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        d, d_f, d_e = config.dim, config.feature_dim, config.context_dim
        d_a, d_h, r = config.attention_dim, config.classifier_hidden, config.n_classes
        specs: list[tuple[str, tuple[int, int]]] = []
        for t in range(config.layers):
            in_obj = d_f if t == 0 else d
            in_ctx = d_e if t == 0 else d
            specs += [
                (f"layer{t}.W1", (d, in_obj)),  # object -> context message
                (f"layer{t}.W2", (d, in_ctx)),  # context self-transform
                (f"layer{t}.W3", (d, d)),  # refreshed context -> object message
                (f"layer{t}.W4", (d, in_obj)),  # object self-transform
            ]
        specs += [
            ("attention.W6", (d_a, d)),
            ("attention.W5", (d_a, d_a)),
            ("attention.a", (1, d_a)),
            ("head.W8", (d_h, d)),
            ("head.W7", (r, d_h)),
            ("discriminator.W", (d, d)),
        ]
        seeds = np.random.SeedSequence(seed).generate_state(len(specs))
        self._params: dict[str, Parameter] = {}
        for (name, shape), s in zip(specs, seeds):
            data = glorot_init(shape, int(s))
            if name == "attention.a":
                data = data.ravel()
            self._params[name] = Parameter(data, name)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def param(self, name: str) -> Parameter:
        return self._params[name]

    # --- per-meta-path convolution --------------------------------------

    def context_update(self, h_u: Tensor, h_v: Tensor, h_c: Tensor, layer: int) -> Tensor:
        """New context states from both endpoint states and the old context states.

        Symmetric in (h_u, h_v): one shared endpoint transform is applied to
        their sum. Operates on (C, d_in) batches.
        """
        w1 = self._params[f"layer{layer}.W1"]
        w2 = self._params[f"layer{layer}.W2"]
        return ad.relu(ad.add((h_u + h_v) @ w1.T, h_c @ w2.T))

    def object_update(self, h_x: Tensor, ctx_sum: Tensor, layer: int) -> Tensor:
        """New object states from summed incident-context states plus self.

        ``ctx_sum`` is the per-object sum of the refreshed incident context
        states (zero rows for objects with no contexts).
        """
        w3 = self._params[f"layer{layer}.W3"]
        w4 = self._params[f"layer{layer}.W4"]
        return ad.relu(ad.add(ctx_sum @ w3.T, h_x @ w4.T))

    def encode_metapath(
        self,
        graph: ContextGraph,
        features: Tensor,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Run the mutual-update layers over one meta-path's bipartite graph.

        Within layer t the context update runs first (from layer-t object and
        context states) and the object update then aggregates the refreshed
        context states, so neighbor information reaches an object in a single
        layer. With zero layers this returns the features untouched.
        """
        h_x = features
        h_c = Tensor(graph.features)
        n = graph.n_objects
        rate = self.config.dropout
        for t in range(self.config.layers):
            if train and rate > 0.0:
                assert rng is not None, "training forward needs a dropout rng"
                h_x = ad.dropout(h_x, rate, rng, True)
                h_c = ad.dropout(h_c, rate, rng, True)
            h_u = ad.gather_rows(h_x, graph.u_index)
            h_v = ad.gather_rows(h_x, graph.v_index)
            new_c = self.context_update(h_u, h_v, h_c, t)
            ctx_sum = ad.add(
                ad.segment_sum(new_c, graph.u_index, n),
                ad.segment_sum(new_c, graph.v_index, n),
            )
            new_x = self.object_update(h_x, ctx_sum, t)
            h_x, h_c = new_x, new_c
        return h_x

    # --- fusion and heads -------------------------------------------------

    def semantic_attention(self, per_metapath: list[Tensor]) -> tuple[Tensor, Tensor]:
        """Fuse per-meta-path embeddings with learned softmax weights.

        Returns (fused embeddings (n, d), attention weights (n, Q)).
        """
        w6 = self._params["attention.W6"]
        w5 = self._params["attention.W5"]
        a = self._params["attention.a"]
        scores = []
        for h in per_metapath:
            hidden = ad.tanh(h @ w6.T)
            hidden = ad.leaky_relu(hidden @ w5.T, self.config.leaky_slope)
            scores.append(hidden @ a)
        stacked = ad.stack_columns(scores)
        weights = ad.softmax(stacked, axis=1)
        parts = [
            ad.elementwise_mul(ad.column(weights, q), h)
            for q, h in enumerate(per_metapath)
        ]
        fused = ad.relu(ad.add_n(parts))
        return fused, weights

    def classify(
        self,
        z: Tensor,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Two-layer head producing one score per label; argmax predicts."""
        w8 = self._params["head.W8"]
        w7 = self._params["head.W7"]
        hidden = ad.relu(z @ w8.T)
        if train and self.config.dropout > 0.0:
            assert rng is not None
            hidden = ad.dropout(hidden, self.config.dropout, rng, True)
        return hidden @ w7.T

    def supervised_loss(
        self, class_scores: Tensor, labels: np.ndarray, train_idx: np.ndarray
    ) -> Tensor:
        """Summed cross-entropy of the training rows (softmax over scores)."""
        if len(train_idx) == 0:
            raise ValueError("supervised_loss: empty training set")
        rows = ad.gather_rows(class_scores, train_idx)
        log_probs = ad.log_softmax(rows, axis=1)
        onehot = np.zeros((len(train_idx), self.config.n_classes), dtype=np.float64)
        onehot[np.arange(len(train_idx)), labels[train_idx]] = 1.0
        picked = ad.elementwise_mul(log_probs, Tensor(onehot))
        return ad.scale(ad.tensor_sum(picked), -1.0)

    def summary_vector(self, z: Tensor) -> Tensor:
        """Global representation: the mean of the positive embeddings."""
        return ad.row_mean(z)

    def discriminator_scores(self, z: Tensor, s: Tensor) -> Tensor:
        """Raw bilinear pairing of each embedding with the summary."""
        w = self._params["discriminator.W"]
        return (z @ w) @ s

    def discriminate(self, z: Tensor, s: Tensor) -> Tensor:
        """Probability that each (embedding, summary) pair is a real one."""
        return ad.sigmoid(self.discriminator_scores(z, s))

    def selfsup_loss(self, z_pos: Tensor, z_neg: Tensor, s: Tensor) -> Tensor:
        """Binary cross-entropy separating real pairs from corrupted ones.

        Stable log-sigmoid form; equals ln 2 when the discriminator outputs
        0.5 everywhere and tends to 0 under perfect separation.
        """
        pos = self.discriminator_scores(z_pos, s)
        neg = self.discriminator_scores(z_neg, s)
        total = pos.data.shape[0] + neg.data.shape[0]
        if total == 0:
            raise ValueError("selfsup_loss: no samples")
        summed = ad.add(
            ad.tensor_sum(ad.logsigmoid(pos)),
            ad.tensor_sum(ad.logsigmoid(ad.scale(neg, -1.0))),
        )
        return ad.scale(summed, -1.0 / total)

    def l2_penalty(self) -> Tensor:
        """Sum of squared entries over every parameter."""
        terms = [ad.tensor_sum(ad.elementwise_mul(p, p)) for p in self.parameters()]
        return ad.add_n(terms)

    def total_loss(
        self,
        sup: Tensor,
        ss: Tensor | None,
        ss_weight: float,
        weight_decay: float,
    ) -> Tensor:
        """Joint objective: supervised + weighted contrastive + L2 penalty."""
        loss = sup
        if ss is not None and not self.config.supervised_only:
            loss = ad.add(loss, ad.scale(ss, ss_weight))
        if weight_decay != 0.0:
            loss = ad.add(loss, ad.scale(self.l2_penalty(), weight_decay))
        return loss

    # --- full pass ---------------------------------------------------------

    def forward_full(
        self,
        graphs: dict[str, ContextGraph],
        features: np.ndarray,
        corrupted: dict[str, np.ndarray] | None,
        labels: np.ndarray,
        train_idx: np.ndarray,
        weight_decay: float = 0.0,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ForwardResult:
        """One joint pass: both branches share every parameter and graph.

        The negative branch re-encodes the same graphs from per-meta-path
        row-shuffled features (pass ``corrupted=None`` to skip it, e.g. for
        supervised-only training or plain evaluation). The summary vector is
        computed from the positive branch only.
        """
        x = Tensor(features)
        pos = [self.encode_metapath(graphs[mp], x, train, rng) for mp in self.config.metapaths]
        z, att = self.semantic_attention(pos)
        class_scores = self.classify(z, train, rng)
        sup = self.supervised_loss(class_scores, labels, train_idx)

        z_neg: Tensor | None = None
        att_neg = None
        ss: Tensor | None = None
        pos_prob = neg_prob = None
        if corrupted is not None and not self.config.supervised_only:
            neg = [
                self.encode_metapath(graphs[mp], Tensor(corrupted[mp]), train, rng)
                for mp in self.config.metapaths
            ]
            z_neg, att_neg_t = self.semantic_attention(neg)
            att_neg = att_neg_t.data
            s = self.summary_vector(z)
            ss = self.selfsup_loss(z, z_neg, s)
            pos_prob = self.discriminate(z, s).data
            neg_prob = self.discriminate(z_neg, s).data

        loss = self.total_loss(sup, ss, self.config.ss_weight, weight_decay)
        return ForwardResult(
            embeddings=z,
            embeddings_neg=z_neg,
            class_scores=class_scores,
            attention=att.data,
            attention_neg=att_neg,
            sup_loss=sup,
            ss_loss=ss,
            loss=loss,
            pos_prob=pos_prob,
            neg_prob=neg_prob,
        )
