"""On-disk data model: instances, discourse-tree parses, embeddings.

Instances travel as line-delimited JSON (one instance per line). Embeddings
travel as a binary container (magic ``CDCLEMB1``, u32 width, little-endian
float32 vectors) plus a JSON index sidecar. A deterministic hashed embedding
(`hash_embed`) stands in for a real encoder so the engine runs end to end
without any external model.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError, ParseError, ValidationError

LABELS = ("Entailment", "Neutral", "Contradiction")

EMBED_MAGIC = b"CDCLEMB1"
SLOTS = ("doc1", "doc2", "hyp")
_SLOT_CODE = {name: code for code, name in enumerate(SLOTS)}


@dataclass(frozen=True)
class EduSpan:
    """One elementary discourse unit: 1-based ordinal plus character span."""

    index: int
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class RstTreeSpec:
    """Binary discourse tree as (s, t, u, rel_left, rel_right) tuples.

    Each tuple splits the EDU interval [s, u] into [s, t] and [t+1, u];
    ``rel_left``/``rel_right`` label the parent-child edges.
    """

    tuples: tuple[tuple[int, int, int, str, str], ...]


@dataclass(frozen=True)
class Document:
    lang: str
    text: str
    edus: tuple[EduSpan, ...]
    tree: RstTreeSpec


@dataclass(frozen=True)
class Instance:
    id: str
    group_id: str
    doc1: Document
    doc2: Document
    hypothesis_text: str
    hypothesis_lang: str
    label: str
    explanation: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def doc(self, slot: str) -> Document:
        if slot == "doc1":
            return self.doc1
        if slot == "doc2":
            return self.doc2
        raise KeyError(slot)


def _validate_spans(edus: tuple[EduSpan, ...], text: str, rid: str, slot: str) -> None:
    if not edus:
        raise ValidationError(f"{rid}/{slot}: document has no EDUs")
    prev_end = 0
    for pos, span in enumerate(edus, start=1):
        where = f"{rid}/{slot}/edu{pos}"
        if span.index != pos:
            raise ValidationError(f"{where}: EDU index {span.index} not sequential")
        if not (0 <= span.start < span.end <= len(text)):
            raise ValidationError(
                f"{where}: span [{span.start},{span.end}) outside document bounds 0..{len(text)}"
            )
        if span.start < prev_end:
            raise ValidationError(f"{where}: span overlaps previous EDU")
        if span.text != text[span.start : span.end]:
            raise ValidationError(f"{where}: text does not match substring at span")
        prev_end = span.end


def _validate_tree(tree: RstTreeSpec, n_leaves: int, rid: str, slot: str) -> None:
    where = f"{rid}/{slot}/tree"
    tuples = tree.tuples
    expected = max(n_leaves - 1, 0)
    if len(tuples) != expected:
        raise ValidationError(
            f"{where}: {len(tuples)} tuples for {n_leaves} EDUs (expected {expected})"
        )
    if n_leaves <= 1:
        return
    by_span: dict[tuple[int, int], tuple[int, int, int, str, str]] = {}
    for s, t, u, rel_l, rel_r in tuples:
        if not (1 <= s <= t < u <= n_leaves):
            raise ValidationError(
                f"{where}: tuple ({s},{t},{u}) violates s ≤ t < u within [1,{n_leaves}]"
            )
        if not rel_l or not rel_r:
            raise ValidationError(f"{where}: tuple ({s},{t},{u}) has empty relation label")
        if (s, u) in by_span:
            raise ValidationError(f"{where}: duplicate span ({s},{u})")
        by_span[(s, u)] = (s, t, u, rel_l, rel_r)
    if (1, n_leaves) not in by_span:
        raise ValidationError(f"{where}: no root tuple covering (1,{n_leaves})")
    # Walk down from the root; every tuple must be reached exactly once.
    seen: set[tuple[int, int]] = set()
    stack = [(1, n_leaves)]
    visited_tuples = 0
    leaves = 0
    while stack:
        span = stack.pop()
        if span in seen:
            raise ValidationError(f"{where}: span {span} referenced twice")
        seen.add(span)
        s, u = span
        if s == u:
            leaves += 1
            continue
        tup = by_span.get(span)
        if tup is None:
            raise ValidationError(f"{where}: no tuple covers span ({s},{u})")
        visited_tuples += 1
        _, t, _, _, _ = tup
        stack.append((s, t))
        stack.append((t + 1, u))
    if visited_tuples != len(tuples) or leaves != n_leaves:
        raise ValidationError(f"{where}: tuples do not form a single tree over the EDUs")


def validate_instance(inst: Instance) -> Instance:
    """Check every documented invariant; returns the instance unchanged."""
    rid = inst.id
    if inst.label not in LABELS:
        raise ValidationError(f"{rid}/label: label not in {{Entailment, Neutral, Contradiction}}")
    for slot in ("doc1", "doc2"):
        doc = inst.doc(slot)
        _validate_spans(doc.edus, doc.text, rid, slot)
        _validate_tree(doc.tree, len(doc.edus), rid, slot)
        for ordinal in inst.explanation.get(slot, ()):
            if not (1 <= ordinal <= len(doc.edus)):
                raise ValidationError(
                    f"{rid}/explanation/{slot}: ordinal {ordinal} has no EDU (doc has {len(doc.edus)})"
                )
    if not inst.hypothesis_text:
        raise ValidationError(f"{rid}/hypothesis: empty text")
    return inst


def _document_from_json(obj: dict, text_key: str, rid: str, slot: str) -> Document:
    try:
        text = obj["text"]
        spans = tuple(
            EduSpan(index=i, start=e["start"], end=e["end"], text=text[e["start"] : e["end"]])
            for i, e in enumerate(obj["edus"], start=1)
        )
        tree = RstTreeSpec(
            tuples=tuple((t[0], t[1], t[2], t[3], t[4]) for t in obj.get("tree", []))
        )
        return Document(lang=obj["lang"], text=text, edus=spans, tree=tree)
    except (KeyError, IndexError, TypeError) as exc:
        raise ParseError(f"{rid}/{slot}: malformed document object ({exc})") from exc


def instance_from_json(obj: dict) -> Instance:
    rid = obj.get("id", "<missing id>")
    try:
        inst = Instance(
            id=obj["id"],
            group_id=obj["group_id"],
            doc1=_document_from_json(obj["doc1"], "text", rid, "doc1"),
            doc2=_document_from_json(obj["doc2"], "text", rid, "doc2"),
            hypothesis_text=obj["hypothesis"]["text"],
            hypothesis_lang=obj["hypothesis"].get("lang", ""),
            label=obj["label"],
            explanation={
                "doc1": tuple(sorted(obj.get("explanation", {}).get("doc1", []))),
                "doc2": tuple(sorted(obj.get("explanation", {}).get("doc2", []))),
            },
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{rid}: missing or malformed field ({exc})") from exc
    return validate_instance(inst)


def instance_to_json(inst: Instance) -> dict:
    def doc_obj(doc: Document) -> dict:
        return {
            "lang": doc.lang,
            "text": doc.text,
            "edus": [{"start": e.start, "end": e.end} for e in doc.edus],
            "tree": [list(t) for t in doc.tree.tuples],
        }

    return {
        "id": inst.id,
        "group_id": inst.group_id,
        "doc1": doc_obj(inst.doc1),
        "doc2": doc_obj(inst.doc2),
        "hypothesis": {"text": inst.hypothesis_text, "lang": inst.hypothesis_lang},
        "label": inst.label,
        "explanation": {
            "doc1": list(inst.explanation.get("doc1", ())),
            "doc2": list(inst.explanation.get("doc2", ())),
        },
    }


def load_instances(path, collect_errors: bool = False):
    """Load a JSONL instance file.

    With ``collect_errors=False`` (default) the first bad record raises.
    With ``collect_errors=True`` returns ``(instances, errors)`` where each
    error is a string naming the line and the violated invariant.
    """
    instances: list[Instance] = []
    errors: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                err = ParseError(f"line {lineno}: invalid JSON ({exc.msg})")
                if collect_errors:
                    errors.append(str(err))
                    continue
                raise err from exc
            try:
                instances.append(instance_from_json(obj))
            except (ParseError, ValidationError) as exc:
                if collect_errors:
                    errors.append(f"line {lineno}: {exc}")
                    continue
                raise type(exc)(f"line {lineno}: {exc}") from exc
    if collect_errors:
        return instances, errors
    return instances


def save_instances(instances: Iterable[Instance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_json(inst), ensure_ascii=False))
            fh.write("\n")


def group_instances(instances: Iterable[Instance]) -> dict[str, list[Instance]]:
    """Group by group_id, preserving first-seen order."""
    groups: dict[str, list[Instance]] = {}
    for inst in instances:
        groups.setdefault(inst.group_id, []).append(inst)
    return groups


# --------------------------------------------------------------------------
# Embeddings


def hash_embed(text: str, d: int, seed: int) -> np.ndarray:
    """Deterministic unit vector from seeded hashes of character 1-3-grams.

    Pure function of (text, d, seed): indices and signs come from SHA-256 over
    (seed, n, gram), counts are accumulated as exact integers, and the norm is
    the correctly rounded sqrt of an exact integer, so outputs are bit-equal
    across runs, platforms, and any faithful reimplementation.
    """
    if d < 1:
        raise ContractError(f"embedding width must be >= 1, got {d}")
    counts = [0] * d
    seed_bytes = struct.pack("<q", seed)
    for n in (1, 2, 3):
        for i in range(len(text) - n + 1):
            digest = hashlib.sha256(seed_bytes + bytes([n]) + text[i : i + n].encode("utf-8")).digest()
            idx = int.from_bytes(digest[:8], "little") % d
            counts[idx] += 1 if digest[8] & 1 else -1
    sum_sq = sum(c * c for c in counts)
    if sum_sq == 0:
        vec = np.zeros(d, dtype=np.float64)
        vec[seed % d] = 1.0
        return vec
    norm = math.sqrt(sum_sq)
    return np.array(counts, dtype=np.float64) / norm


class EmbeddingTable:
    """Per-(instance, slot, ordinal) float32 vectors of one shared width."""

    def __init__(self, d: int):
        if d < 1:
            raise ContractError(f"embedding width must be >= 1, got {d}")
        self.d = d
        self._vecs: dict[tuple[str, str, int], np.ndarray] = {}

    def put(self, instance_id: str, slot: str, ordinal: int, vec: np.ndarray) -> None:
        arr = np.asarray(vec, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] != self.d:
            raise ValidationError(
                f"{instance_id}/{slot}/{ordinal}: vector width {arr.shape} vs table width {self.d}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{instance_id}/{slot}/{ordinal}: non-finite vector entries")
        self._vecs[(instance_id, slot, ordinal)] = arr

    def edu(self, instance_id: str, slot: str, ordinal: int) -> np.ndarray:
        key = (instance_id, slot, ordinal)
        if key not in self._vecs:
            raise ValidationError(f"missing EDU vector for {instance_id}/{slot}/{ordinal}")
        return self._vecs[key]

    def hypothesis(self, instance_id: str) -> np.ndarray:
        key = (instance_id, "hyp", 0)
        if key not in self._vecs:
            raise ValidationError(f"hypothesis vector absent for instance {instance_id}")
        return self._vecs[key]

    def records(self) -> Iterator[tuple[str, str, int, np.ndarray]]:
        for (rid, slot, ordinal), vec in self._vecs.items():
            yield rid, slot, ordinal, vec

    def check_complete(self, instances: Iterable[Instance]) -> None:
        for inst in instances:
            for slot in ("doc1", "doc2"):
                for span in inst.doc(slot).edus:
                    self.edu(inst.id, slot, span.index)
            self.hypothesis(inst.id)

    def __len__(self) -> int:
        return len(self._vecs)


def hash_embedding_table(instances: Iterable[Instance], d: int, seed: int) -> EmbeddingTable:
    """Build a complete table from `hash_embed` over EDU and hypothesis text."""
    table = EmbeddingTable(d)
    for inst in instances:
        for slot in ("doc1", "doc2"):
            for span in inst.doc(slot).edus:
                table.put(inst.id, slot, span.index, hash_embed(span.text, d, seed))
        table.put(inst.id, "hyp", 0, hash_embed(inst.hypothesis_text, d, seed))
    return table


def write_embeddings(table: EmbeddingTable, path) -> None:
    """Write the binary container and its JSON index sidecar."""
    index_records = []
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<I", table.d))
        for rid, slot, ordinal, vec in table.records():
            index_records.append(
                {"id": rid, "slot": slot, "ordinal": ordinal, "offset": fh.tell()}
            )
            rid_bytes = rid.encode("utf-8")
            fh.write(struct.pack("<H", len(rid_bytes)))
            fh.write(rid_bytes)
            fh.write(struct.pack("<BI", _SLOT_CODE[slot], ordinal))
            fh.write(vec.astype("<f4").tobytes())
    with open(str(path) + ".idx.json", "w", encoding="utf-8") as fh:
        json.dump({"magic": EMBED_MAGIC.decode("ascii"), "d": table.d, "records": index_records}, fh)


def read_embeddings(path) -> EmbeddingTable:
    """Read a binary embedding container (sequential scan; index not required)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBED_MAGIC))
        if magic != EMBED_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {EMBED_MAGIC!r}")
        header = fh.read(4)
        if len(header) != 4:
            raise ParseError(f"{path}: truncated header")
        (d,) = struct.unpack("<I", header)
        table = EmbeddingTable(d)
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise ParseError(f"{path}: truncated record header")
            (id_len,) = struct.unpack("<H", head)
            rid = fh.read(id_len).decode("utf-8")
            meta = fh.read(5)
            if len(meta) != 5:
                raise ParseError(f"{path}: truncated record for {rid}")
            slot_code, ordinal = struct.unpack("<BI", meta)
            if slot_code >= len(SLOTS):
                raise ParseError(f"{path}: unknown slot code {slot_code} for {rid}")
            payload = fh.read(4 * d)
            if len(payload) != 4 * d:
                raise ParseError(
                    f"{path}: vector for {rid}/{SLOTS[slot_code]}/{ordinal} truncated "
                    f"({len(payload)} bytes, expected {4 * d})"
                )
            table.put(rid, SLOTS[slot_code], ordinal, np.frombuffer(payload, dtype="<f4").copy())
    return table


def load_embeddings(path, instances: Iterable[Instance]) -> EmbeddingTable:
    """Read the container and verify it covers every EDU and hypothesis."""
    table = read_embeddings(path)
    table.check_complete(instances)
    return table
