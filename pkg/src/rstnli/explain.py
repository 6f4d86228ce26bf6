"""EDU-level attribution from first-layer attention.

A node's importance is the head-averaged attention mass it receives at the
first layer of its document graph. Importance-weighted layer-1 features
interact with the projected hypothesis through scaled-dot attention; each
leaf's weighted feature concatenated with the interaction vector feeds a
small MLP whose sigmoid output is the probability that the EDU belongs to
the explanation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import ContractError
from .interchange import Instance
from .model import ParameterStore

log = logging.getLogger(__name__)


def node_importance(betas: dict[tuple[str, int], Value], n_nodes: int, heads: int) -> Value:
    """Column-sum of every layer-1 attention matrix, averaged over heads.

    Returns an (n, 1) column; entries are exactly zero for nodes that receive
    no attention.
    """
    total = None
    ones = ad.constant(np.ones((1, n_nodes)))
    for (_, _), beta in betas.items():
        incoming = ad.transpose(ad.matmul(ones, beta))
        total = incoming if total is None else ad.add(total, incoming)
    if total is None:
        return ad.constant(np.zeros((n_nodes, 1)))
    return ad.scale(total, 1.0 / heads)


def weight_features(H: Value, importance: Value) -> Value:
    """Scale row i of H by importance_i (broadcasted elementwise product)."""
    if H.shape[0] != importance.shape[0]:
        raise ContractError(
            f"weight_features: {H.shape[0]} feature rows vs {importance.shape[0]} scores"
        )
    return ad.mul(H, importance)


def hypothesis_interaction(h_hypo_proj: Value, H_weighted: Value) -> tuple[Value, Value]:
    """Scaled-dot attention of the hypothesis over weighted node features.

    Returns (interaction vector O of shape (1, d), attention weights (1, n)).
    """
    n, d = H_weighted.shape
    if n < 1:
        raise ContractError("hypothesis_interaction needs at least one node")
    scores = ad.scale(ad.matmul(h_hypo_proj, ad.transpose(H_weighted)), 1.0 / math.sqrt(d))
    weights = ad.softmax_rows(scores)
    return ad.matmul(weights, H_weighted), weights


def explanation_scores(
    H_weighted: Value, interaction: Value, leaf_ids: list[int], store: ParameterStore
) -> Value:
    """Per-leaf explanation probability: Sigmoid(MLP(h'_i ++ O))."""
    leaves = ad.slice_rows(H_weighted, leaf_ids)
    broadcast = ad.matmul(ad.constant(np.ones((len(leaf_ids), 1))), interaction)
    x = ad.concat(leaves, broadcast, axis=1)
    z = ad.elu(ad.add(ad.matmul(x, ad.transpose(store["explain.W1"])), store["explain.b1"]))
    logits = ad.add(ad.matmul(z, ad.transpose(store["explain.W2"])), store["explain.b2"])
    return ad.sigmoid(logits)


def loss_exp(scores: Value, gold: np.ndarray) -> Value:
    """Mean binary cross entropy over leaves (logs clamped at 1e-12)."""
    gold = np.asarray(gold, dtype=np.float64).reshape(-1, 1)
    if gold.shape[0] != scores.shape[0]:
        raise ContractError(f"loss_exp: {scores.shape[0]} scores vs {gold.shape[0]} labels")
    y = ad.constant(gold)
    one = ad.constant(np.ones_like(gold))
    pos = ad.mul(y, ad.log(scores, floor=1e-12))
    neg_part = ad.mul(ad.add(one, ad.neg(y)), ad.log(ad.add(one, ad.neg(scores)), floor=1e-12))
    return ad.row_mean(ad.neg(ad.add(pos, neg_part)))


@dataclass
class ExplanationResult:
    """Selected explanation EDUs with their probabilities and recovered text."""

    probs: dict[str, dict[int, float]]
    selected: dict[str, tuple[int, ...]]
    texts: dict[str, tuple[str, ...]]


def extract_explanations(
    leaf_scores: list[tuple[str, int, float]],
    instance: Instance,
    mode: str = "threshold",
    tau: float = 0.5,
    k: int | None = None,
) -> ExplanationResult:
    """Turn per-leaf scores into explanation EDU sets.

    ``leaf_scores`` rows are (slot, ordinal, probability). Threshold mode
    keeps scores >= tau; top-k keeps the k highest with ties broken toward
    the earlier document and lower ordinal.
    """
    if mode == "threshold":
        if not (0.0 < tau < 1.0):
            raise ContractError(f"tau must be in (0, 1), got {tau}")
        chosen = [(slot, ordinal) for slot, ordinal, s in leaf_scores if s >= tau]
    elif mode == "topk":
        if k is None or k < 1:
            raise ContractError(f"top-k extraction needs k >= 1, got {k}")
        if k > len(leaf_scores):
            log.warning("top-k %d exceeds %d leaves; clamping", k, len(leaf_scores))
            k = len(leaf_scores)
        slot_rank = {"doc1": 0, "doc2": 1}
        ranked = sorted(leaf_scores, key=lambda row: (-row[2], slot_rank[row[0]], row[1]))
        chosen = [(slot, ordinal) for slot, ordinal, _ in ranked[:k]]
    else:
        raise ContractError(f"unknown extraction mode {mode!r}")

    probs: dict[str, dict[int, float]] = {"doc1": {}, "doc2": {}}
    for slot, ordinal, s in leaf_scores:
        probs[slot][ordinal] = float(s)
    selected = {
        slot: tuple(sorted(o for sl, o in chosen if sl == slot)) for slot in ("doc1", "doc2")
    }
    texts = {
        slot: tuple(instance.doc(slot).edus[o - 1].text for o in selected[slot])
        for slot in ("doc1", "doc2")
    }
    return ExplanationResult(probs=probs, selected=selected, texts=texts)
