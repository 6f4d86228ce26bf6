"""Operator command line: validate, build-graph, delta-sweep, train, eval,
explain, gradcheck, metrics.

Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 numeric
failure. Every run echoes its resolved configuration to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import metrics as mt
from .errors import ContractError, DataError, NumericError
from .explain import extract_explanations
from .graph import build_doc_graph, delta_sweep, dump_graph, fuse_graphs
from .interchange import hash_embedding_table, load_embeddings, load_instances
from .model import ModelConfig
from .train import (
    TrainConfig,
    evaluate,
    forward_group,
    full_model_grad_check,
    build_premise_tensors,
    load_checkpoint,
    save_checkpoint,
    train,
    write_training_log,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {json.dumps(resolved, default=str, sort_keys=True)}", file=sys.stderr)


def _add_embedding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--embeddings", choices=["hash", "file"], default="hash",
        help="embedding source: deterministic hash vectors or a binary container",
    )
    p.add_argument("--embeddings-file", help="path to the embedding container (file mode)")
    p.add_argument("--embed-dim", type=int, default=32, help="vector width for hash mode")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.8, help="cosine threshold for Lexical fusion edges")
    p.add_argument("--gamma", type=float, default=0.2, help="explanation-loss weight")
    p.add_argument("--lambda", dest="lam", type=float, default=0.8, help="classification+triplet loss weight")
    p.add_argument("--sigma", type=float, default=1.0, help="entailment-vs-contradiction margin")
    p.add_argument("--theta", type=float, default=0.5, help="neutral-vs-contradiction margin")
    p.add_argument("--heads1", type=int, default=4, help="attention heads in layer 1")
    p.add_argument("--heads2", type=int, default=1, help="attention heads in layer 2")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout rate after each layer")
    p.add_argument("--d-hidden", type=int, default=256, help="hidden width of the attention layers")
    p.add_argument("--mlp-hidden", type=int, default=256, help="hidden width of the MLP heads")
    p.add_argument(
        "--relation-count", choices=["present", "global"], default="present",
        help="divide messages by relations present in the graph or by the full vocabulary",
    )
    p.add_argument(
        "--triplet-mode", choices=["pair", "hypo"], default="pair",
        help="triplet legs from pair representations or projected hypothesis vectors",
    )
    p.add_argument(
        "--lexical-leaves-only", action="store_true",
        help="restrict Lexical fusion candidates to leaf nodes",
    )


def _load_table(args, instances):
    if args.embeddings == "file":
        if not args.embeddings_file:
            raise ContractError("--embeddings file requires --embeddings-file")
        return load_embeddings(args.embeddings_file, instances)
    return hash_embedding_table(instances, args.embed_dim, args.seed)


def _model_config(args, d_in: int) -> ModelConfig:
    return ModelConfig(
        d_in=d_in,
        d_hidden=args.d_hidden,
        mlp_hidden=args.mlp_hidden,
        heads_layer1=args.heads1,
        heads_layer2=args.heads2,
        dropout=args.dropout,
        sigma=args.sigma,
        theta=args.theta,
        gamma=args.gamma,
        lam=args.lam,
        delta=args.delta,
        relation_count_mode=args.relation_count,
        triplet_mode=args.triplet_mode,
        lexical_leaves_only=args.lexical_leaves_only,
    )


def _doc_graphs(inst, table, vocab: str):
    graphs = {}
    for slot in ("doc1", "doc2"):
        doc = inst.doc(slot)
        feats = {s.index: table.edu(inst.id, slot, s.index) for s in doc.edus}
        graphs[slot] = build_doc_graph(doc.edus, doc.tree, feats, vocab=vocab)
    return graphs


def cmd_validate(args) -> int:
    instances, errors = load_instances(args.data, collect_errors=True)
    for err in errors:
        print(f"error: {err}")
    groups = {}
    for inst in instances:
        groups.setdefault(inst.group_id, []).append(inst)
    print(
        f"valid instances: {len(instances)}  groups: {len(groups)}  errors: {len(errors)}"
    )
    return EXIT_DATA if errors else EXIT_OK


def cmd_build_graph(args) -> int:
    instances = load_instances(args.data)
    table = _load_table(args, instances)
    chosen = [i for i in instances if i.id == args.id] if args.id else instances[:1]
    if not chosen:
        raise DataError(f"instance id {args.id!r} not found in {args.data}")
    inst = chosen[0]
    graphs = _doc_graphs(inst, table, vocab="full")
    fused = fuse_graphs(graphs["doc1"], graphs["doc2"], args.delta, args.lexical_leaves_only)
    dump = {
        "id": inst.id,
        "delta": args.delta,
        "doc1": dump_graph(graphs["doc1"]),
        "doc2": dump_graph(graphs["doc2"]),
        "fused": dump_graph(fused),
    }
    text = json.dumps(dump, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_delta_sweep(args) -> int:
    instances = load_instances(args.data)
    table = _load_table(args, instances)
    deltas = sorted(float(x) for x in args.deltas.split(","))
    lines = ["instance_id,delta,lexical_edges"]
    for inst in instances:
        graphs = _doc_graphs(inst, table, vocab="full")
        for delta, count in delta_sweep(
            graphs["doc1"], graphs["doc2"], deltas, args.lexical_leaves_only
        ):
            lines.append(f"{inst.id},{delta},{count}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_train(args) -> int:
    instances = load_instances(args.data)
    dev = load_instances(args.dev) if args.dev else instances
    table = _load_table(args, instances + ([] if args.dev is None else dev))
    mcfg = _model_config(args, d_in=table.d)
    tcfg = TrainConfig(
        lr=args.lr,
        batch_groups=args.batch_groups,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        seed=args.seed,
        early_stop_patience=args.patience,
    )
    store, report = train(instances, dev, table, mcfg, tcfg)
    save_checkpoint(store, args.out_checkpoint)
    if args.log_csv:
        write_training_log(report, args.log_csv)
    summary = {
        "best_epoch": report.best_epoch,
        "best_dev_macro_f1": report.best_dev_f1,
        "epochs_run": len(report.history),
        "wall_clock_s": round(report.wall_clock, 3),
        "checkpoint": args.out_checkpoint,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    instances = load_instances(args.data)
    table = _load_table(args, instances)
    config, store = load_checkpoint(args.checkpoint)
    if config.d_in != table.d:
        raise DataError(f"checkpoint d_in={config.d_in} vs embedding width {table.d}")
    report = evaluate(
        store, instances, table, config,
        extraction=args.extraction, tau=args.tau, top_k=args.top_k,
    )
    if args.dump_predictions:
        with open(args.dump_predictions, "w", encoding="utf-8") as fh:
            for row in report.predictions:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    out = {"classification": report.classification, "explanation": report.explanation}
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_explain(args) -> int:
    instances = load_instances(args.data)
    table = _load_table(args, instances)
    config, store = load_checkpoint(args.checkpoint)
    if config.d_in != table.d:
        raise DataError(f"checkpoint d_in={config.d_in} vs embedding width {table.d}")
    rows = []
    import rstnli.autodiff as ad

    with ad.no_grad():
        cache = {}
        for inst in instances:
            tensors = cache.get(inst.group_id)
            if tensors is None:
                tensors = build_premise_tensors(inst, table, config)
                cache[inst.group_id] = tensors
            fwd = forward_group(tensors, [inst], table, store, config, ad.NO_DROPOUT)
            result = extract_explanations(
                fwd.per_instance[0].leaf_scores, inst,
                mode=args.extraction, tau=args.tau, k=args.top_k,
            )
            rows.append(
                {
                    "id": inst.id,
                    "selected": {s: list(result.selected[s]) for s in ("doc1", "doc2")},
                    "spans": {
                        s: [
                            [inst.doc(s).edus[o - 1].start, inst.doc(s).edus[o - 1].end]
                            for o in result.selected[s]
                        ]
                        for s in ("doc1", "doc2")
                    },
                    "scores": {s: result.probs[s] for s in ("doc1", "doc2")},
                }
            )
    with open(args.out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"wrote explanations for {len(rows)} instances to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    error = full_model_grad_check(seed=args.seed, eps=args.eps)
    print(f"max relative gradient error: {error:.3e}")
    if error >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance:.1e}")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_metrics(args) -> int:
    preds_rows = [json.loads(line) for line in open(args.preds, encoding="utf-8") if line.strip()]
    golds = {}
    if args.golds:
        for line in open(args.golds, encoding="utf-8"):
            if line.strip():
                row = json.loads(line)
                golds[row["id"]] = row
    pred_labels, gold_labels = [], []
    text_rows = []
    for row in preds_rows:
        gold_row = golds.get(row["id"], row)
        if "pred" not in row or ("gold" not in gold_row and "label" not in gold_row):
            raise DataError(f"prediction row {row.get('id')} lacks pred/gold labels")
        pred_labels.append(row["pred"])
        gold_labels.append(gold_row.get("gold", gold_row.get("label")))
        if "candidate" in row and ("reference" in gold_row):
            text_rows.append((row["candidate"], gold_row["reference"]))
    report = {"classification": mt.classification_metrics(pred_labels, gold_labels)}
    if text_rows:
        overlap = {"rouge1": [], "rouge2": [], "rougeL": [], "bleu": []}
        for cand, ref in text_rows:
            ct, rt = mt.tokenize(cand), mt.tokenize(ref)
            overlap["rouge1"].append(mt.rouge(ct, rt, 1)["f1"])
            overlap["rouge2"].append(mt.rouge(ct, rt, 2)["f1"])
            overlap["rougeL"].append(mt.rouge(ct, rt, "L")["f1"])
            overlap["bleu"].append(mt.bleu(ct, rt)["bleu"])
        report["explanation"] = {k: float(np.mean(v)) for k, v in overlap.items()}
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        cls = report["classification"]
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("metric,value\n")
            for key in ("macro_precision", "macro_recall", "macro_f1", "micro_f1", "weighted_f1"):
                fh.write(f"{key},{cls[key]!r}\n")
            for key, value in report.get("explanation", {}).items():
                fh.write(f"{key},{value!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rstnli",
        description="Cross-document NLI over fused discourse graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False, embeddings=False):
        p.add_argument("--seed", type=int, default=0, help="seed for all stochastic choices")
        if embeddings:
            _add_embedding_flags(p)
        if model:
            _add_model_flags(p)

    p = sub.add_parser("validate", help="check an instance file against every invariant")
    p.add_argument("data", help="instance JSONL file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build-graph", help="dump document and fused graphs for one instance")
    p.add_argument("--data", required=True, help="instance JSONL file")
    p.add_argument("--id", help="instance id (default: first instance)")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.add_argument("--delta", type=float, default=0.8, help="cosine threshold for Lexical edges")
    p.add_argument(
        "--lexical-leaves-only", action="store_true",
        help="restrict Lexical fusion candidates to leaf nodes",
    )
    common(p, embeddings=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("delta-sweep", help="Lexical edge counts across thresholds, as CSV")
    p.add_argument("--data", required=True, help="instance JSONL file")
    p.add_argument("--deltas", default="0.5,0.8,0.95", help="comma-separated thresholds")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument(
        "--lexical-leaves-only", action="store_true",
        help="restrict Lexical fusion candidates to leaf nodes",
    )
    common(p, embeddings=True)
    p.set_defaults(func=cmd_delta_sweep)

    p = sub.add_parser("train", help="train the network and write a checkpoint")
    p.add_argument("--data", required=True, help="training instance JSONL file")
    p.add_argument("--dev", help="dev instance JSONL file (default: reuse training data)")
    p.add_argument("--out-checkpoint", required=True, help="checkpoint output path")
    p.add_argument("--log-csv", help="per-epoch CSV log path")
    p.add_argument("--lr", type=float, default=1e-5, help="learning rate")
    p.add_argument("--batch-groups", type=int, default=16, help="premise groups per batch")
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--weight-decay", type=float, default=0.01, help="decoupled weight decay")
    p.add_argument("--patience", type=int, default=0, help="early-stop patience (0 disables)")
    common(p, model=True, embeddings=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--data", required=True, help="instance JSONL file")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--dump-predictions", help="write per-instance predictions JSONL here")
    p.add_argument("--extraction", choices=["threshold", "topk"], default="threshold",
                   help="explanation selection rule")
    p.add_argument("--tau", type=float, default=0.5, help="threshold for threshold mode")
    p.add_argument("--top-k", type=int, help="k for topk mode")
    common(p, embeddings=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="write explanation selections for a split")
    p.add_argument("--data", required=True, help="instance JSONL file")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--extraction", choices=["threshold", "topk"], default="threshold",
                   help="explanation selection rule")
    p.add_argument("--tau", type=float, default=0.5, help="threshold for threshold mode")
    p.add_argument("--top-k", type=int, help="k for topk mode")
    common(p, embeddings=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--eps", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error allowed")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("metrics", help="score prediction files")
    p.add_argument("--preds", required=True, help="predictions JSONL ({id, pred, candidate?})")
    p.add_argument("--golds", help="gold JSONL ({id, gold|label, reference?}); default: preds rows")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--csv", help="also write metric,value CSV here")
    common(p)
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    _echo_config(args)
    try:
        return args.func(args)
    except (DataError, ContractError) as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
