"""Premise-grouped training, evaluation, and checkpointing.

The batch unit is a premise group (the three hypotheses sharing one premise),
so the triplet term always sees co-resident legs. Optimization is the
decoupled-weight-decay adaptive moment method with global-norm gradient
clipping; every stochastic choice (init, shuffling, dropout) is derived from
the seed, so a (seed, data, config) triple fully determines the result.
"""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import explain as xp
from . import metrics as mt
from . import model as md
from .autodiff import Value
from .errors import ContractError, NumericError, ParseError, ValidationError
from .graph import build_doc_graph, fuse_graphs
from .interchange import EmbeddingTable, Instance, group_instances
from .model import GraphTensors, ModelConfig, ParameterStore

log = logging.getLogger(__name__)

CKPT_MAGIC = b"CDCLCKPT1"
CKPT_VERSION = 1
_DTYPES = {0: "<f8", 1: "<f4"}
_DTYPE_CODES = {"<f8": 0, "<f4": 1}


@dataclass
class TrainConfig:
    lr: float = 1e-5
    batch_groups: int = 16
    epochs: int = 20
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.lr < 0 or self.batch_groups < 1 or self.epochs < 1:
            raise ContractError("lr must be >= 0 and batch/epochs positive")


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_f1: float = -1.0
    wall_clock: float = 0.0
    stopped_early: bool = False


@dataclass
class EvalReport:
    classification: dict
    explanation: dict
    predictions: list[dict]


@dataclass
class PremiseTensors:
    """Graphs and feature constants for one premise (shared by a group)."""

    gt1: GraphTensors
    gt2: GraphTensors
    gtp: GraphTensors
    leaf_slots: list[tuple[str, int]]  # stacked (slot, ordinal) per combined leaf row
    leaf_rows: list[int]


def build_premise_tensors(
    inst: Instance, table: EmbeddingTable, config: ModelConfig
) -> PremiseTensors:
    graphs = {}
    for slot in ("doc1", "doc2"):
        doc = inst.doc(slot)
        feats = {span.index: table.edu(inst.id, slot, span.index) for span in doc.edus}
        graphs[slot] = {
            "single": build_doc_graph(doc.edus, doc.tree, feats, vocab="single"),
            "full": build_doc_graph(doc.edus, doc.tree, feats, vocab="full"),
        }
    fused = fuse_graphs(
        graphs["doc1"]["full"],
        graphs["doc2"]["full"],
        config.delta,
        leaves_only=config.lexical_leaves_only,
    )
    gt1 = GraphTensors.from_graph(graphs["doc1"]["single"])
    gt2 = GraphTensors.from_graph(graphs["doc2"]["single"])
    offset = gt1.n_nodes
    leaf_slots = [("doc1", i + 1) for i in gt1.leaf_ids] + [("doc2", i + 1) for i in gt2.leaf_ids]
    leaf_rows = list(gt1.leaf_ids) + [offset + i for i in gt2.leaf_ids]
    return PremiseTensors(
        gt1=gt1,
        gt2=gt2,
        gtp=GraphTensors.from_graph(fused),
        leaf_slots=leaf_slots,
        leaf_rows=leaf_rows,
    )


@dataclass
class InstanceForward:
    instance: Instance
    probs: Value
    pred: str
    loss_cls: Value
    loss_exp: Value
    leaf_scores: list[tuple[str, int, float]]
    triplet_leg: Value


@dataclass
class GroupForward:
    per_instance: list[InstanceForward]
    loss_triplet: Value | None
    anchor: Value
    distances: dict[str, float]


def _gold_leaf_vector(inst: Instance, leaf_slots: list[tuple[str, int]]) -> np.ndarray:
    gold = np.zeros(len(leaf_slots))
    for i, (slot, ordinal) in enumerate(leaf_slots):
        if ordinal in inst.explanation.get(slot, ()):
            gold[i] = 1.0
    return gold


def forward_group(
    premise: PremiseTensors,
    instances: list[Instance],
    table: EmbeddingTable,
    store: ParameterStore,
    config: ModelConfig,
    masks=ad.NO_DROPOUT,
) -> GroupForward:
    """Full network pass for every instance sharing one premise.

    The premise graphs are encoded once; each hypothesis adds its own
    classification, explanation, and triplet leg. The triplet term is present
    only when all three labels are in the group.
    """
    views: dict = {}
    h1_l1, _, betas1 = md.encode_graph(premise.gt1, store, config, masks, views)
    h2_l1, _, betas2 = md.encode_graph(premise.gt2, store, config, masks, views)
    _, hp_l2, _ = md.encode_graph(premise.gtp, store, config, masks, views)
    h_graph = md.pool_graph(hp_l2)
    anchor = ad.matmul(h_graph, ad.transpose(store["triplet.anchor"]))

    imp1 = xp.node_importance(betas1, premise.gt1.n_nodes, config.heads_layer1)
    imp2 = xp.node_importance(betas2, premise.gt2.n_nodes, config.heads_layer1)
    importance = ad.concat(imp1, imp2, axis=0)
    h_docs = ad.concat(h1_l1, h2_l1, axis=0)
    h_weighted = xp.weight_features(h_docs, importance)

    per_instance = []
    legs: dict[str, Value] = {}
    for inst in instances:
        h_hypo = ad.constant(np.asarray(table.hypothesis(inst.id), dtype=np.float64))
        probs, pred, penultimate = md.classify(h_graph, h_hypo, store)
        l_cls = md.loss_cls(probs, inst.label)

        hypo_proj = ad.matmul(h_hypo, ad.transpose(store["explain.hproj"]))
        interaction, _ = xp.hypothesis_interaction(hypo_proj, h_weighted)
        scores = xp.explanation_scores(h_weighted, interaction, premise.leaf_rows, store)
        l_exp = xp.loss_exp(scores, _gold_leaf_vector(inst, premise.leaf_slots))
        leaf_scores = [
            (slot, ordinal, float(s))
            for (slot, ordinal), s in zip(premise.leaf_slots, scores.data[:, 0])
        ]

        if config.triplet_mode == "pair":
            leg = penultimate
        else:
            leg = ad.matmul(h_hypo, ad.transpose(store["triplet.hypo"]))
        legs[inst.label] = leg
        per_instance.append(
            InstanceForward(
                instance=inst,
                probs=probs,
                pred=pred,
                loss_cls=l_cls,
                loss_exp=l_exp,
                leaf_scores=leaf_scores,
                triplet_leg=leg,
            )
        )

    l_trip = None
    distances: dict[str, float] = {}
    if all(label in legs for label in ("Entailment", "Neutral", "Contradiction")):
        l_trip = md.loss_triplet(
            anchor,
            legs["Entailment"],
            legs["Neutral"],
            legs["Contradiction"],
            config.sigma,
            config.theta,
        )
        with ad.no_grad():
            distances = {
                "entailment": ad.euclidean_dist(anchor, legs["Entailment"]).item(),
                "neutral": ad.euclidean_dist(anchor, legs["Neutral"]).item(),
                "contradiction": ad.euclidean_dist(anchor, legs["Contradiction"]).item(),
            }
    return GroupForward(
        per_instance=per_instance, loss_triplet=l_trip, anchor=anchor, distances=distances
    )


def make_batches(
    groups: list[list[Instance]], batch_groups: int, seed: int, epoch: int = 0
) -> list[list[list[Instance]]]:
    """Whole-group batches with seeded, epoch-indexed shuffling."""
    if batch_groups < 1:
        raise ContractError(f"batch_groups must be >= 1, got {batch_groups}")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(groups))
    shuffled = [groups[i] for i in order]
    return [shuffled[i : i + batch_groups] for i in range(0, len(shuffled), batch_groups)]


def complete_group(instances: list[Instance]) -> bool:
    return sorted(i.label for i in instances) == ["Contradiction", "Entailment", "Neutral"]


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, store: ParameterStore, config: TrainConfig):
        self.store = store
        self.cfg = config
        self.m = {name: np.zeros_like(v.data) for name, v in store.params.items()}
        self.v = {name: np.zeros_like(v.data) for name, v in store.params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> float:
        cfg = self.cfg
        total_sq = 0.0
        for g in grads.values():
            total_sq += float((g * g).sum())
        norm = float(np.sqrt(total_sq))
        scale = 1.0
        if cfg.clip_norm > 0 and norm > cfg.clip_norm:
            scale = cfg.clip_norm / norm
        self.t += 1
        bias1 = 1.0 - cfg.beta1**self.t
        bias2 = 1.0 - cfg.beta2**self.t
        for name, p in self.store.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            g = g * scale
            self.m[name] = cfg.beta1 * self.m[name] + (1 - cfg.beta1) * g
            self.v[name] = cfg.beta2 * self.v[name] + (1 - cfg.beta2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = p.data - cfg.lr * (
                m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p.data
            )
        return norm


def _grads_by_name(store: ParameterStore, leaf_grads: dict[Value, np.ndarray]):
    by_value = {id(v): name for name, v in store.params.items()}
    return {by_value[id(v)]: g for v, g in leaf_grads.items() if id(v) in by_value}


def train(
    train_instances: list[Instance],
    dev_instances: list[Instance],
    table: EmbeddingTable,
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_path=None,
) -> tuple[ParameterStore, TrainReport]:
    """Optimize the combined objective; returns the best-dev parameters.

    Per epoch the combined loss over a batch is
    gamma * mean(exp) + lambda * (mean(cls) + mean(triplet-per-group)).
    Dev macro-F1 decides the retained snapshot.
    """
    started = time.perf_counter()
    store = ParameterStore(model_config, seed=train_config.seed)
    optimizer = AdamW(store, train_config)
    drop_rng = np.random.default_rng([train_config.seed, 7919])

    groups = list(group_instances(train_instances).values())
    for g in groups:
        if not complete_group(g):
            log.warning(
                "group %s lacks a full label set; excluded from the triplet term",
                g[0].group_id,
            )
    premise_cache = {
        g[0].group_id: build_premise_tensors(g[0], table, model_config) for g in groups
    }
    dev_cache: dict[str, PremiseTensors] = dict(premise_cache)

    report = TrainReport()
    best_state: dict[str, np.ndarray] | None = None
    since_best = 0
    for epoch in range(train_config.epochs):
        sums = {"exp": 0.0, "cls": 0.0, "trip": 0.0}
        counts = {"pairs": 0, "groups": 0}
        for batch in make_batches(groups, train_config.batch_groups, train_config.seed, epoch):
            with ad.Tape() as tape:
                masks = ad.MaskSource(model_config.dropout, drop_rng)
                exp_sum = cls_sum = trip_sum = None
                n_pairs = 0
                n_groups = 0
                for group in batch:
                    fwd = forward_group(
                        premise_cache[group[0].group_id], group, table, store,
                        model_config, masks,
                    )
                    for one in fwd.per_instance:
                        exp_sum = one.loss_exp if exp_sum is None else ad.add(exp_sum, one.loss_exp)
                        cls_sum = one.loss_cls if cls_sum is None else ad.add(cls_sum, one.loss_cls)
                        n_pairs += 1
                    if fwd.loss_triplet is not None:
                        trip_sum = (
                            fwd.loss_triplet
                            if trip_sum is None
                            else ad.add(trip_sum, fwd.loss_triplet)
                        )
                        n_groups += 1
                l_exp = ad.scale(exp_sum, 1.0 / n_pairs)
                l_cls = ad.scale(cls_sum, 1.0 / n_pairs)
                l_trip = ad.scale(trip_sum, 1.0 / n_groups) if trip_sum is not None else ad.constant(0.0)
                total = md.loss_total(
                    l_exp, l_cls, l_trip, model_config.gamma, model_config.lam
                )
                if not np.isfinite(total.item()):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}: exp={l_exp.item()} "
                        f"cls={l_cls.item()} trip={l_trip.item()}"
                    )
                leaf_grads = tape.run_backward(total)
            optimizer.step(_grads_by_name(store, leaf_grads))
            sums["exp"] += l_exp.item() * n_pairs
            sums["cls"] += l_cls.item() * n_pairs
            sums["trip"] += l_trip.item() * n_groups
            counts["pairs"] += n_pairs
            counts["groups"] += n_groups

        epoch_exp = sums["exp"] / counts["pairs"]
        epoch_cls = sums["cls"] / counts["pairs"]
        epoch_trip = sums["trip"] / counts["groups"] if counts["groups"] else 0.0
        epoch_total = model_config.gamma * epoch_exp + model_config.lam * (epoch_cls + epoch_trip)
        dev_report = evaluate(store, dev_instances, table, model_config, premise_cache=dev_cache)
        dev_f1 = dev_report.classification["macro_f1"]
        row = {
            "epoch": epoch,
            "l_exp": epoch_exp,
            "l_cls": epoch_cls,
            "l_trip": epoch_trip,
            "total": epoch_total,
            "dev_macro_f1": dev_f1,
        }
        report.history.append(row)
        if dev_f1 > report.best_dev_f1:
            report.best_dev_f1 = dev_f1
            report.best_epoch = epoch
            best_state = {name: arr.copy() for name, arr in store.state_arrays().items()}
            since_best = 0
        else:
            since_best += 1
            if train_config.early_stop_patience and since_best >= train_config.early_stop_patience:
                report.stopped_early = True
                break

    if best_state is not None:
        store.load_state(best_state)
    report.wall_clock = time.perf_counter() - started
    if log_path is not None:
        write_training_log(report, log_path)
    return store, report


def write_training_log(report: TrainReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,l_exp,l_cls,l_trip,total,dev_macro_f1\n")
        for row in report.history:
            fh.write(
                f"{row['epoch']},{row['l_exp']!r},{row['l_cls']!r},"
                f"{row['l_trip']!r},{row['total']!r},{row['dev_macro_f1']!r}\n"
            )


def evaluate(
    store: ParameterStore,
    instances: list[Instance],
    table: EmbeddingTable,
    config: ModelConfig,
    extraction: str = "threshold",
    tau: float = 0.5,
    top_k: int | None = None,
    premise_cache: dict[str, PremiseTensors] | None = None,
) -> EvalReport:
    """Dropout-free static evaluation of classification and explanations.

    Instances sharing a group_id share one premise encoding (their premise is
    identical by construction), which keeps evaluation cheap.
    """
    if ad.active_tape() is not None:
        raise ContractError("evaluation must not run under an active tape")
    preds: list[str] = []
    golds: list[str] = []
    predictions: list[dict] = []
    jaccards: list[float] = []
    text_scores: list[dict] = []
    cache = {} if premise_cache is None else premise_cache
    by_group: dict[str, list[Instance]] = {}
    for inst in instances:
        by_group.setdefault(inst.group_id, []).append(inst)
    forwards: dict[str, InstanceForward] = {}
    with ad.no_grad():
        for gid, members in by_group.items():
            tensors = cache.get(gid)
            if tensors is None:
                tensors = build_premise_tensors(members[0], table, config)
                cache[gid] = tensors
            fwd = forward_group(tensors, members, table, store, config, ad.NO_DROPOUT)
            for one in fwd.per_instance:
                forwards[one.instance.id] = one
        for inst in instances:
            one = forwards[inst.id]
            result = xp.extract_explanations(
                one.leaf_scores, inst, mode=extraction, tau=tau, k=top_k
            )
            preds.append(one.pred)
            golds.append(inst.label)
            gold_pairs = {
                (slot, o) for slot in ("doc1", "doc2") for o in inst.explanation.get(slot, ())
            }
            sel_pairs = {
                (slot, o) for slot in ("doc1", "doc2") for o in result.selected[slot]
            }
            jaccards.append(mt.jaccard(sel_pairs, gold_pairs))
            gold_text = " ".join(
                inst.doc(slot).edus[o - 1].text
                for slot in ("doc1", "doc2")
                for o in inst.explanation.get(slot, ())
            )
            cand_text = " ".join(
                t for slot in ("doc1", "doc2") for t in result.texts[slot]
            )
            if gold_text:
                cand_tokens = mt.tokenize(cand_text)
                ref_tokens = mt.tokenize(gold_text)
                text_scores.append(
                    {
                        "rouge1": mt.rouge(cand_tokens, ref_tokens, 1)["f1"],
                        "rouge2": mt.rouge(cand_tokens, ref_tokens, 2)["f1"],
                        "rougeL": mt.rouge(cand_tokens, ref_tokens, "L")["f1"],
                        # An empty selection is routine mid-training; scoring it
                        # 0 directly avoids the metric's empty-candidate warning.
                        "bleu": mt.bleu(cand_tokens, ref_tokens)["bleu"] if cand_tokens else 0.0,
                    }
                )
            predictions.append(
                {
                    "id": inst.id,
                    "gold": inst.label,
                    "pred": one.pred,
                    "probabilities": [float(p) for p in one.probs.data[0]],
                    "selected_edus": {
                        "doc1": list(result.selected["doc1"]),
                        "doc2": list(result.selected["doc2"]),
                    },
                }
            )
    classification = mt.classification_metrics(preds, golds)
    explanation = {"mean_jaccard": float(np.mean(jaccards)) if jaccards else 0.0}
    for key in ("rouge1", "rouge2", "rougeL", "bleu"):
        vals = [s[key] for s in text_scores]
        explanation[key] = float(np.mean(vals)) if vals else 0.0
    return EvalReport(classification=classification, explanation=explanation, predictions=predictions)


def toy_group(seed: int = 0) -> list[Instance]:
    """One premise group with two 4-EDU documents and all three hypotheses.

    Both documents share one EDU text so the fused graph always carries a
    Lexical edge; the trees use a small fixed relation pool.
    """
    from .interchange import Document, EduSpan, RstTreeSpec

    def doc(lang: str, pieces: list[str], tuples) -> Document:
        spans = []
        cursor = 0
        for i, piece in enumerate(pieces, start=1):
            if i > 1:
                cursor += 1
            spans.append(EduSpan(index=i, start=cursor, end=cursor + len(piece), text=piece))
            cursor += len(piece)
        return Document(
            lang=lang,
            text=" ".join(pieces),
            edus=tuple(spans),
            tree=RstTreeSpec(tuples=tuple(tuples)),
        )

    doc1 = doc(
        "en",
        ["the mine collapsed.", "rescue teams arrived.", "officials confirmed the toll.",
         "the shared marker phrase."],
        [(1, 1, 2, "Elaboration", "Cause"), (1, 2, 3, "Contrast", "Elaboration"),
         (1, 3, 4, "Cause", "Elaboration")],
    )
    doc2 = doc(
        "fr",
        ["la mine s'est effondree.", "les secours sont arrives.",
         "the shared marker phrase.", "le bilan est confirme."],
        [(1, 1, 2, "Cause", "Contrast"), (3, 3, 4, "Elaboration", "Elaboration"),
         (1, 2, 4, "Elaboration", "Cause")],
    )
    explanations = {
        "Entailment": {"doc1": (1, 3), "doc2": (1,)},
        "Neutral": {"doc1": (2,), "doc2": (4,)},
        "Contradiction": {"doc1": (4,), "doc2": (2, 3)},
    }
    return [
        Instance(
            id=f"toy{seed}-{label[:3].lower()}",
            group_id=f"toy{seed}",
            doc1=doc1,
            doc2=doc2,
            hypothesis_text=f"toy hypothesis {label.lower()} s{seed}",
            hypothesis_lang="en",
            label=label,
            explanation=explanations[label],
        )
        for label in ("Entailment", "Neutral", "Contradiction")
    ]


def full_model_grad_check(
    seed: int = 0,
    d_in: int = 4,
    d_hidden: int = 4,
    mlp_hidden: int = 4,
    eps: float = 1e-5,
) -> float:
    """Finite-difference check of the combined loss over every parameter.

    Builds one seeded premise group (two 4-EDU documents, all three
    hypotheses), freezes one drawn dropout-mask sequence, and compares the
    reverse-mode gradient of the total loss against central differences.
    Returns the max relative error.
    """
    from .interchange import hash_embedding_table

    instances = toy_group(seed)
    table = hash_embedding_table(instances, d_in, seed)
    config = ModelConfig(d_in=d_in, d_hidden=d_hidden, mlp_hidden=mlp_hidden)
    store = ParameterStore(config, seed=seed)
    premise = build_premise_tensors(instances[0], table, config)

    recorder = ad.MaskSource(config.dropout, np.random.default_rng([seed, 3]), record=True)
    with ad.no_grad():
        forward_group(premise, instances, table, store, config, recorder)
    replay = ad.ReplayMasks(recorder.drawn)

    def objective() -> Value:
        replay.rewind()
        fwd = forward_group(premise, instances, table, store, config, replay)
        l_exp = l_cls = None
        for one in fwd.per_instance:
            l_exp = one.loss_exp if l_exp is None else ad.add(l_exp, one.loss_exp)
            l_cls = one.loss_cls if l_cls is None else ad.add(l_cls, one.loss_cls)
        n = len(fwd.per_instance)
        return md.loss_total(
            ad.scale(l_exp, 1.0 / n),
            ad.scale(l_cls, 1.0 / n),
            fwd.loss_triplet,
            config.gamma,
            config.lam,
        )

    return ad.grad_check(objective, store.values(), eps=eps)


# --------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(store: ParameterStore, path, dtype: str = "<f8") -> None:
    if dtype not in _DTYPE_CODES:
        raise ContractError(f"unsupported checkpoint dtype {dtype}")
    config_blob = json.dumps(store.config.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        arrays = store.state_arrays()
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BII", _DTYPE_CODES[dtype], arr.shape[0], arr.shape[1]))
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def load_checkpoint(path, expected_config: ModelConfig | None = None):
    """Read a checkpoint; returns (ModelConfig, ParameterStore)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ParseError(f"{path}: bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        (config_len,) = struct.unpack("<I", fh.read(4))
        config = ModelConfig.from_dict(json.loads(fh.read(config_len).decode("utf-8")))
        if expected_config is not None:
            for attr in ("d_in", "d_hidden", "mlp_hidden", "heads_layer1", "heads_layer2"):
                got = getattr(config, attr)
                want = getattr(expected_config, attr)
                if got != want:
                    raise ValidationError(
                        f"{path}: checkpoint {attr}={got} vs requested {attr}={want}"
                    )
        (n_params,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            header = fh.read(9)
            if len(header) != 9:
                raise ParseError(f"{path}: truncated parameter header for {name}")
            dtype_code, rows, cols = struct.unpack("<BII", header)
            if dtype_code not in _DTYPES:
                raise ParseError(f"{path}: unknown dtype code {dtype_code}")
            dtype = _DTYPES[dtype_code]
            nbytes = rows * cols * np.dtype(dtype).itemsize
            payload = fh.read(nbytes)
            if len(payload) != nbytes:
                raise ParseError(f"{path}: truncated data for {name}")
            arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(rows, cols).copy()
    store = ParameterStore(config, seed=0)
    store.load_state(arrays)
    return config, store
