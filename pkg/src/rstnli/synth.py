"""Seeded synthetic datasets for demos, capability tests, and smoke runs."""

from __future__ import annotations

import numpy as np

from .interchange import LABELS, Document, EduSpan, Instance, RstTreeSpec

_VOCAB = [
    "mine", "river", "storm", "council", "harvest", "border", "treaty", "glacier",
    "market", "signal", "convoy", "reactor", "votes", "drought", "bridge", "archive",
    "strike", "orbit", "harbor", "census", "tunnel", "summit", "relay", "quarry",
]

TREE_RELATIONS = [
    "Elaboration", "Contrast", "Cause", "Background", "Temporal",
    "Joint", "Attribution", "Condition", "Summary",
]


def random_tree(n_leaves: int, rng: np.random.Generator) -> RstTreeSpec:
    """Uniformly random binary split structure over n leaves."""
    tuples: list[tuple[int, int, int, str, str]] = []

    def split(s: int, u: int) -> None:
        if s == u:
            return
        t = int(rng.integers(s, u))
        rel_l = TREE_RELATIONS[int(rng.integers(len(TREE_RELATIONS)))]
        rel_r = TREE_RELATIONS[int(rng.integers(len(TREE_RELATIONS)))]
        tuples.append((s, t, u, rel_l, rel_r))
        split(s, t)
        split(t + 1, u)

    split(1, n_leaves)
    return RstTreeSpec(tuples=tuple(tuples))


def _random_edu_text(rng: np.random.Generator, n_words: int) -> str:
    words = [_VOCAB[int(rng.integers(len(_VOCAB)))] for _ in range(n_words)]
    return " ".join(words) + "."


def random_document(rng: np.random.Generator, lang: str, n_edus: int) -> Document:
    pieces = [_random_edu_text(rng, int(rng.integers(3, 7))) for _ in range(n_edus)]
    spans = []
    cursor = 0
    parts = []
    for i, piece in enumerate(pieces, start=1):
        if parts:
            parts.append(" ")
            cursor += 1
        spans.append(EduSpan(index=i, start=cursor, end=cursor + len(piece), text=piece))
        parts.append(piece)
        cursor += len(piece)
    return Document(
        lang=lang, text="".join(parts), edus=tuple(spans), tree=random_tree(n_edus, rng)
    )


def make_synthetic_instances(
    n_groups: int,
    seed: int = 0,
    min_edus: int = 3,
    max_edus: int = 5,
    langs: tuple[str, str] = ("en", "fr"),
) -> list[Instance]:
    """Grouped instances: one premise and all three hypothesis labels per group."""
    rng = np.random.default_rng(seed)
    instances = []
    for g in range(n_groups):
        gid = f"g{g:03d}"
        doc1 = random_document(rng, langs[0], int(rng.integers(min_edus, max_edus + 1)))
        doc2 = random_document(rng, langs[1], int(rng.integers(min_edus, max_edus + 1)))
        for label in LABELS:
            marker = " ".join(
                _VOCAB[int(rng.integers(len(_VOCAB)))] for _ in range(4)
            )
            explanation = {}
            for slot, doc in (("doc1", doc1), ("doc2", doc2)):
                n = len(doc.edus)
                count = int(rng.integers(1, min(2, n) + 1))
                picks = rng.choice(n, size=count, replace=False)
                explanation[slot] = tuple(sorted(int(p) + 1 for p in picks))
            instances.append(
                Instance(
                    id=f"{gid}-{label[:3].lower()}",
                    group_id=gid,
                    doc1=doc1,
                    doc2=doc2,
                    hypothesis_text=f"claim {marker} {gid} {label.lower()}",
                    hypothesis_lang="en",
                    label=label,
                    explanation=explanation,
                )
            )
    return instances
