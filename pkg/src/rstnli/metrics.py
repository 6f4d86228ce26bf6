"""Classification, text-overlap, and annotation-agreement metrics.

Tokenization for the overlap metrics is language-neutral: Unicode NFC,
lowercase, word characters only. Every score lies in [0, 1].
"""

from __future__ import annotations

import logging
import math
import re
import unicodedata
from collections import Counter

from .errors import ContractError
from .interchange import LABELS

log = logging.getLogger(__name__)

_WORD = re.compile(r"\w+", re.UNICODE)

BLEU_EPSILON = 1e-9


def tokenize(text: str) -> list[str]:
    return _WORD.findall(unicodedata.normalize("NFC", text).lower())


def confusion_matrix(preds: list[str], golds: list[str], labels=LABELS) -> list[list[int]]:
    """Counts with gold on rows, prediction on columns."""
    index = {lab: i for i, lab in enumerate(labels)}
    matrix = [[0] * len(labels) for _ in labels]
    for pred, gold in zip(preds, golds):
        if pred not in index or gold not in index:
            raise ContractError(f"label outside {labels}: pred={pred!r} gold={gold!r}")
    for pred, gold in zip(preds, golds):
        matrix[index[gold]][index[pred]] += 1
    return matrix


def classification_metrics(preds: list[str], golds: list[str], labels=None) -> dict:
    """Macro/micro/weighted P-R-F1 with a per-class breakdown.

    Per-class F1 is defined as 0 when precision + recall is 0. Micro F1
    equals accuracy for single-label predictions.
    """
    if len(preds) != len(golds):
        raise ContractError(f"{len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ContractError("classification_metrics needs at least one pair")
    if labels is None:
        labels = LABELS if all(x in LABELS for x in list(preds) + list(golds)) else tuple(
            sorted(set(preds) | set(golds))
        )
    matrix = confusion_matrix(preds, golds, labels)
    n = len(preds)
    per_class = {}
    for i, lab in enumerate(labels):
        tp = matrix[i][i]
        pred_total = sum(matrix[r][i] for r in range(len(labels)))
        gold_total = sum(matrix[i])
        precision = tp / pred_total if pred_total else 0.0
        recall = tp / gold_total if gold_total else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[lab] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": gold_total,
        }
    k = len(labels)
    correct = sum(matrix[i][i] for i in range(k))
    macro_p = sum(per_class[lab]["precision"] for lab in labels) / k
    macro_r = sum(per_class[lab]["recall"] for lab in labels) / k
    macro_f1 = sum(per_class[lab]["f1"] for lab in labels) / k
    weighted_f1 = sum(per_class[lab]["f1"] * per_class[lab]["support"] for lab in labels) / n
    return {
        "labels": list(labels),
        "confusion": matrix,
        "per_class": per_class,
        "macro_precision": macro_p,
        "macro_recall": macro_r,
        "macro_f1": macro_f1,
        "micro_f1": correct / n,
        "weighted_f1": weighted_f1,
        "accuracy": correct / n,
        "count": n,
    }


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _prf(overlap: float, cand_total: int, ref_total: int) -> dict:
    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge(candidate: list[str], reference: list[str], variant) -> dict:
    """ROUGE-n (clipped n-gram overlap) or ROUGE-L (LCS), as P/R/F1."""
    if not reference:
        raise ContractError("rouge needs a non-empty reference")
    if variant == "L":
        overlap = lcs_length(candidate, reference)
        return _prf(overlap, len(candidate), len(reference))
    n = int(variant)
    if n < 1:
        raise ContractError(f"rouge variant must be 1, 2, or 'L', got {variant!r}")
    cand_counts = _ngrams(candidate, n)
    ref_counts = _ngrams(reference, n)
    overlap = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return _prf(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def bleu(candidate: list[str], reference: list[str], max_n: int = 4) -> dict:
    """Cumulative BLEU-1..max_n with brevity penalty.

    Clipped modified precision per order; zero counts at n >= 2 are smoothed
    by an epsilon numerator so short extractive texts keep a nonzero score.
    An empty candidate scores 0 with a warning.
    """
    if max_n < 1:
        raise ContractError(f"max_n must be >= 1, got {max_n}")
    result = {f"bleu{n}": 0.0 for n in range(1, max_n + 1)}
    result["bleu"] = 0.0
    if not candidate:
        log.warning("bleu: empty candidate scored 0")
        return result
    bp = 1.0 if len(candidate) >= len(reference) else math.exp(1.0 - len(reference) / len(candidate))
    precisions = []
    for n in range(1, max_n + 1):
        cand_counts = _ngrams(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            precisions.append(0.0 if n == 1 else BLEU_EPSILON)
            continue
        ref_counts = _ngrams(reference, n)
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if clipped == 0:
            precisions.append(0.0 if n == 1 else BLEU_EPSILON / total)
        else:
            precisions.append(clipped / total)
    for n in range(1, max_n + 1):
        window = precisions[:n]
        if any(p == 0.0 for p in window):
            result[f"bleu{n}"] = 0.0
        else:
            result[f"bleu{n}"] = bp * math.exp(sum(math.log(p) for p in window) / n)
    result["bleu"] = result[f"bleu{max_n}"]
    return result


def cohen_kappa(a: list, b: list) -> float:
    if len(a) != len(b):
        raise ContractError(f"kappa needs equal lengths, got {len(a)} vs {len(b)}")
    if not a:
        raise ContractError("kappa needs at least one pair")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    expected = sum(counts_a[lab] * counts_b.get(lab, 0) for lab in counts_a) / (n * n)
    if expected == 1.0:
        # Both annotators constant on one label: chance correction degenerates.
        log.warning("kappa: degenerate marginals (p_e = 1); using convention")
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


def jaccard(a, b) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def span_overlap(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> float:
    """Character-mass Jaccard between two half-open span lists."""

    def char_set(spans):
        chars = set()
        for start, end in spans:
            chars.update(range(start, end))
        return chars

    ca, cb = char_set(a), char_set(b)
    if not ca and not cb:
        return 1.0
    return len(ca & cb) / len(ca | cb)


def agreement(a, b, kind: str) -> float:
    if kind == "kappa":
        return cohen_kappa(a, b)
    if kind == "jaccard":
        return jaccard(a, b)
    if kind == "span_overlap":
        return span_overlap(a, b)
    raise ContractError(f"unknown agreement kind {kind!r}")
