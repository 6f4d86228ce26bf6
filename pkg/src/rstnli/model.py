"""Relation-aware graph attention network over discourse graphs.

Two attention layers update node features. Within a layer, each (relation,
head) pair scores node pairs as ELU(a^T [W h_i || W h_j]), normalizes scores
over each node's relation-specific neighborhood, and averages messages over
heads; relation messages are mixed by softmax-normalized relation weights and
divided by the relation count. Residual projection and dropout follow each
layer. Graph pooling is a node mean; classification is an MLP over the pooled
premise vector concatenated with the hypothesis vector; the triplet loss
enforces the anchor-distance ordering entailment < neutral < contradiction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import ContractError, ValidationError
from .graph import FUSED_RELATIONS, RELATION_INDEX, RstGraph
from .interchange import LABELS

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    d_in: int
    d_hidden: int = 256
    mlp_hidden: int = 256
    heads_layer1: int = 4
    heads_layer2: int = 1
    dropout: float = 0.1
    sigma: float = 1.0
    theta: float = 0.5
    gamma: float = 0.2
    lam: float = 0.8
    delta: float = 0.8
    relations: tuple[str, ...] = FUSED_RELATIONS
    # "present": divide Eq.-style messages by the relations present in the
    # graph; "global": divide by the full vocabulary size.
    relation_count_mode: str = "present"
    # "pair": triplet legs are MLP-penultimate pair representations;
    # "hypo": legs are projected raw hypothesis vectors.
    triplet_mode: str = "pair"
    lexical_leaves_only: bool = False

    def __post_init__(self):
        if self.heads_layer1 < 1 or self.heads_layer2 < 1:
            raise ContractError("attention head counts must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.relation_count_mode not in ("present", "global"):
            raise ContractError(f"bad relation_count_mode {self.relation_count_mode!r}")
        if self.triplet_mode not in ("pair", "hypo"):
            raise ContractError(f"bad triplet_mode {self.triplet_mode!r}")
        self.relations = tuple(self.relations)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["relations"] = list(self.relations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["relations"] = tuple(d["relations"])
        return cls(**d)


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    std = math.sqrt(2.0 / (rows + cols))
    return rng.normal(0.0, std, size=(rows, cols))


class ParameterStore:
    """All learnable arrays, keyed by name, shared across every graph."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Value] = {}
        rng = np.random.default_rng(seed)
        c = config
        for layer, heads, d_in in (
            (1, c.heads_layer1, c.d_in),
            (2, c.heads_layer2, c.d_hidden),
        ):
            for rel in c.relations:
                for k in range(heads):
                    self._add(f"layer{layer}.W.{rel}.{k}", _glorot(rng, c.d_hidden, d_in))
                    self._add(f"layer{layer}.a.{rel}.{k}", _glorot(rng, 2 * c.d_hidden, 1))
        self._add("relation_logits", np.zeros((len(c.relations), 1)))
        self._add("residual.P", _glorot(rng, c.d_hidden, c.d_in))
        self._add("cls.W1", _glorot(rng, c.mlp_hidden, c.d_hidden + c.d_in))
        self._add("cls.b1", np.zeros((1, c.mlp_hidden)))
        self._add("cls.W2", _glorot(rng, 3, c.mlp_hidden))
        self._add("cls.b2", np.zeros((1, 3)))
        self._add("triplet.anchor", _glorot(rng, c.mlp_hidden, c.d_hidden))
        self._add("triplet.hypo", _glorot(rng, c.mlp_hidden, c.d_in))
        self._add("explain.hproj", _glorot(rng, c.d_hidden, c.d_in))
        self._add("explain.W1", _glorot(rng, c.mlp_hidden, 2 * c.d_hidden))
        self._add("explain.b1", np.zeros((1, c.mlp_hidden)))
        self._add("explain.W2", _glorot(rng, 1, c.mlp_hidden))
        self._add("explain.b2", np.zeros((1, 1)))

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = ad.parameter(data)

    def __getitem__(self, name: str) -> Value:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def values(self) -> list[Value]:
        return list(self.params.values())

    def attention_params(self, layer: int, relation: str, head: int) -> tuple[Value, Value]:
        return (
            self.params[f"layer{layer}.W.{relation}.{head}"],
            self.params[f"layer{layer}.a.{relation}.{head}"],
        )

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: v.data for name, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, v in self.params.items():
            if name not in arrays:
                raise ValidationError(f"checkpoint missing parameter {name}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != v.data.shape:
                raise ValidationError(
                    f"checkpoint parameter {name}: shape {arr.shape} vs expected {v.data.shape}"
                )
            v.data = np.ascontiguousarray(arr)


@dataclass
class GraphTensors:
    """Immutable per-graph inputs for the network."""

    n_nodes: int
    present: tuple[str, ...]
    masks: dict[str, np.ndarray]
    features: Value
    leaf_ids: list[int]

    @classmethod
    def from_graph(cls, graph: RstGraph) -> "GraphTensors":
        return cls(
            n_nodes=graph.n_nodes,
            present=graph.relation_set,
            masks=graph.neighbor_masks(),
            features=ad.constant(graph.feature_matrix()),
            leaf_ids=graph.leaf_ids(),
        )


def relation_weights(store: ParameterStore, present: tuple[str, ...]) -> Value:
    """Softmax of the trainable relation scalars restricted to present relations."""
    if not present:
        raise ContractError("relation_weights needs at least one relation")
    idx = [RELATION_INDEX[rel] for rel in present]
    logits = ad.slice_rows(store["relation_logits"], idx)
    return ad.softmax_rows(ad.transpose(logits))


def _param_view(store: ParameterStore, layer: int, relation: str, head: int, cache):
    """Transposed projection and split attention vector for one (layer, rel, head).

    The same views are shared across the document and fused graphs of one
    forward pass; ``cache`` must not outlive the tape it was built under.
    """
    key = (layer, relation, head)
    if cache is not None and key in cache:
        return cache[key]
    W, a = store.attention_params(layer, relation, head)
    d_out = W.shape[0]
    view = (
        ad.transpose(W),
        ad.slice_rows(a, np.arange(d_out)),
        ad.slice_rows(a, np.arange(d_out, 2 * d_out)),
    )
    if cache is not None:
        cache[key] = view
    return view


def _attention_beta(H: Value, view, mask: np.ndarray) -> tuple[Value, Value]:
    """Score and normalize one (relation, head): returns (beta, projected H)."""
    W_t, a_src, a_dst = view
    WH = ad.matmul(H, W_t)
    s_src = ad.matmul(WH, a_src)
    s_dst = ad.matmul(WH, a_dst)
    scores = ad.elu(ad.add(s_src, ad.transpose(s_dst)))
    return ad.masked_softmax_rows(scores, mask), WH


def attention_coeffs(
    gt: GraphTensors, H: Value, layer: int, relation: str, head: int, store: ParameterStore
) -> Value:
    """Dense attention matrix for one (layer, relation, head).

    Row i is a distribution over N_r(v_i); rows of nodes with no r-neighbors
    are all zero.
    """
    mask = gt.masks.get(relation)
    if mask is None:
        return ad.constant(np.zeros((gt.n_nodes, gt.n_nodes)))
    beta, _ = _attention_beta(H, _param_view(store, layer, relation, head, None), mask)
    return beta


def rst_gat_layer(
    gt: GraphTensors,
    H: Value,
    store: ParameterStore,
    layer: int,
    config: ModelConfig,
    masks=ad.NO_DROPOUT,
    view_cache=None,
) -> tuple[Value, dict[tuple[str, int], Value]]:
    """One relation-aware multi-head attention update.

    Returns the new node features and the attention matrices keyed by
    (relation, head). Isolated graphs reduce to the residual path.
    """
    heads = config.heads_layer1 if layer == 1 else config.heads_layer2
    betas: dict[tuple[str, int], Value] = {}
    residual = ad.matmul(H, ad.transpose(store["residual.P"])) if layer == 1 else H

    if gt.present:
        alphas_col = ad.transpose(relation_weights(store, gt.present))
        message = None
        for ri, rel in enumerate(gt.present):
            rel_msg = None
            for k in range(heads):
                view = _param_view(store, layer, rel, k, view_cache)
                beta, WH = _attention_beta(H, view, gt.masks[rel])
                betas[(rel, k)] = beta
                contrib = ad.matmul(beta, WH)
                rel_msg = contrib if rel_msg is None else ad.add(rel_msg, contrib)
            rel_msg = ad.scale(rel_msg, 1.0 / heads)
            weighted = ad.mul(rel_msg, ad.slice_rows(alphas_col, [ri]))
            message = weighted if message is None else ad.add(message, weighted)
        divisor = (
            len(gt.present) if config.relation_count_mode == "present" else len(config.relations)
        )
        out = ad.add(ad.elu(ad.scale(message, 1.0 / divisor)), residual)
    else:
        out = residual
    out = ad.dropout_mask_apply(out, masks.next(out.shape))
    return out, betas


def encode_graph(
    gt: GraphTensors,
    store: ParameterStore,
    config: ModelConfig,
    masks=ad.NO_DROPOUT,
    view_cache=None,
) -> tuple[Value, Value, dict[tuple[str, int], Value]]:
    """Run both layers; returns (H after layer 1, H after layer 2, layer-1 betas)."""
    h1, betas1 = rst_gat_layer(gt, gt.features, store, 1, config, masks, view_cache)
    h2, _ = rst_gat_layer(gt, h1, store, 2, config, masks, view_cache)
    return h1, h2, betas1


def pool_graph(H: Value) -> Value:
    if H.shape[0] < 1:
        raise ContractError("pool_graph needs at least one node")
    return ad.row_mean(H)


def classify(
    h_graph: Value, h_hypo: Value, store: ParameterStore
) -> tuple[Value, str, Value]:
    """MLP over the concatenated premise/hypothesis vectors.

    Returns (probabilities, predicted label, penultimate representation).
    Ties break toward the lower label index (Entailment < Neutral <
    Contradiction).
    """
    x = ad.concat(h_graph, h_hypo, axis=1)
    z = ad.elu(ad.add(ad.matmul(x, ad.transpose(store["cls.W1"])), store["cls.b1"]))
    logits = ad.add(ad.matmul(z, ad.transpose(store["cls.W2"])), store["cls.b2"])
    probs = ad.softmax_rows(logits)
    pred = LABELS[int(np.argmax(probs.data[0]))]
    return probs, pred, z


CE_FLOOR = 1e-12


def loss_cls(probs: Value, gold_label: str) -> Value:
    """Cross entropy -log p(gold); probabilities below 1e-12 are clamped."""
    if gold_label not in LABELS:
        raise ValidationError(f"label not in {{Entailment, Neutral, Contradiction}}: {gold_label}")
    onehot = np.zeros((1, 3))
    onehot[0, LABELS.index(gold_label)] = 1.0
    p_gold = ad.matmul(probs, ad.transpose(ad.constant(onehot)))
    if p_gold.item() < CE_FLOOR:
        log.warning("cross-entropy clamped: p(gold)=%.3e < %.0e", p_gold.item(), CE_FLOOR)
    return ad.neg(ad.log(p_gold, floor=CE_FLOOR))


def loss_triplet(
    anchor: Value, pos: Value, neutral: Value, negative: Value, sigma: float, theta: float
) -> Value:
    """Hinge pair enforcing d(a,p) + sigma <= d(a,n) and d(a,neu) + theta <= d(a,n)."""
    d_ap = ad.euclidean_dist(anchor, pos)
    d_aneu = ad.euclidean_dist(anchor, neutral)
    d_an = ad.euclidean_dist(anchor, negative)
    term1 = ad.relu(ad.add(ad.add(d_ap, ad.neg(d_an)), ad.constant([[sigma]])))
    term2 = ad.relu(ad.add(ad.add(d_aneu, ad.neg(d_an)), ad.constant([[theta]])))
    return ad.add(term1, term2)


def loss_total(l_exp: Value, l_cls: Value, l_trip: Value, gamma: float, lam: float) -> Value:
    return ad.add(ad.scale(l_exp, gamma), ad.scale(ad.add(l_cls, l_trip), lam))
