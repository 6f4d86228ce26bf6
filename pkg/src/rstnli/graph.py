"""Discourse graphs: per-document trees-as-graphs and cross-document fusion.

Each document's binary discourse tree becomes a graph whose leaves are EDUs
and whose branch nodes cover EDU intervals; every parent-child edge appears
in both directions under the tuple's relation label. Fusing two document
graphs keeps everything and adds bidirectional ``Lexical`` edges between
cross-document node pairs whose feature cosine similarity exceeds a
threshold delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ValidationError
from .interchange import EduSpan, RstTreeSpec

# Fusion-time relation vocabulary (19 labels; canonical parameter order).
FUSED_RELATIONS = (
    "Temporal",
    "TextualOrganization",
    "Joint",
    "Topic-Comment",
    "Comparison",
    "Condition",
    "Contrast",
    "Evaluation",
    "Topic-Change",
    "Summary",
    "Manner-Means",
    "Attribution",
    "Cause",
    "Background",
    "Enablement",
    "Explanation",
    "Same-Unit",
    "Elaboration",
    "Lexical",
)
RELATION_INDEX = {name: i for i, name in enumerate(FUSED_RELATIONS)}

# Subset used when a document graph is analysed on its own.
SINGLE_DOC_RELATIONS = (
    "Temporal",
    "Summary",
    "Condition",
    "Contrast",
    "Cause",
    "Background",
    "Elaboration",
    "Explanation",
    "Lexical",
)

FALLBACK_RELATION = "Elaboration"

LEXICAL = "Lexical"


@dataclass(frozen=True)
class GraphNode:
    id: int
    span: tuple[int, int]  # covered EDU ordinals, inclusive
    text: str
    feature: np.ndarray
    is_leaf: bool


@dataclass
class RstGraph:
    nodes: list[GraphNode]
    edges: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def relation_set(self) -> tuple[str, ...]:
        present: dict[str, None] = {}
        for _, _, rel in self.edges:
            present.setdefault(rel, None)
        return tuple(sorted(present, key=RELATION_INDEX.__getitem__))

    def leaf_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_leaf]

    def neighbor_masks(self) -> dict[str, np.ndarray]:
        """Per-relation boolean adjacency: mask[r][i, j] == True iff j in N_r(i)."""
        n = self.n_nodes
        masks = {rel: np.zeros((n, n), dtype=bool) for rel in self.relation_set}
        for src, dst, rel in self.edges:
            masks[rel][src, dst] = True
        return masks

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.feature for n in self.nodes]).astype(np.float64)


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractError(f"cosine_sim: shapes {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ContractError("cosine_sim undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def map_relation(label: str, vocab: str = "single") -> str:
    """Map a parser label into the configured vocabulary.

    ``single``: the single-document subset, everything else falls back to
    Elaboration. ``full``: the 19-label fusion vocabulary with the same
    fallback for unknown labels.
    """
    if vocab == "single":
        return label if label in SINGLE_DOC_RELATIONS else FALLBACK_RELATION
    if vocab == "full":
        return label if label in RELATION_INDEX else FALLBACK_RELATION
    raise ContractError(f"unknown relation vocabulary {vocab!r}")


def build_doc_graph(
    spans: tuple[EduSpan, ...],
    tree: RstTreeSpec,
    feats: dict[int, np.ndarray],
    vocab: str = "single",
) -> RstGraph:
    """Build the graph for one document.

    One leaf node per EDU (feature = its embedding), one branch node per tree
    tuple (feature = mean of its two children, text = concatenation), and
    bidirectional parent-child edges labelled by the tuple's relations.
    """
    nodes: list[GraphNode] = []
    by_span: dict[tuple[int, int], int] = {}
    for span in spans:
        if span.index not in feats:
            raise ValidationError(f"build_doc_graph: no feature for EDU {span.index}")
        node = GraphNode(
            id=len(nodes),
            span=(span.index, span.index),
            text=span.text,
            feature=np.asarray(feats[span.index], dtype=np.float64),
            is_leaf=True,
        )
        nodes.append(node)
        by_span[node.span] = node.id

    edges: list[tuple[int, int, str]] = []
    # Narrower intervals first so children always exist before their parent.
    for s, t, u, rel_l, rel_r in sorted(tree.tuples, key=lambda tup: (tup[2] - tup[0], tup[0])):
        left = by_span.get((s, t))
        right = by_span.get((t + 1, u))
        if left is None or right is None:
            raise ValidationError(f"build_doc_graph: tuple ({s},{t},{u}) references missing span")
        feature = 0.5 * (nodes[left].feature + nodes[right].feature)
        parent = GraphNode(
            id=len(nodes),
            span=(s, u),
            text=nodes[left].text + nodes[right].text,
            feature=feature,
            is_leaf=False,
        )
        nodes.append(parent)
        by_span[parent.span] = parent.id
        for child, rel in ((left, rel_l), (right, rel_r)):
            mapped = map_relation(rel, vocab)
            edges.append((parent.id, child, mapped))
            edges.append((child, parent.id, mapped))
    return RstGraph(nodes=nodes, edges=edges)


def _lexical_pairs(
    g1: RstGraph, g2: RstGraph, delta: float, leaves_only: bool
) -> list[tuple[int, int]]:
    pairs = []
    left = g1.nodes if not leaves_only else [n for n in g1.nodes if n.is_leaf]
    right = g2.nodes if not leaves_only else [n for n in g2.nodes if n.is_leaf]
    for a in left:
        for b in right:
            if cosine_sim(a.feature, b.feature) > delta:
                pairs.append((a.id, b.id))
    return pairs


def fuse_graphs(
    g1: RstGraph, g2: RstGraph, delta: float, leaves_only: bool = False
) -> RstGraph:
    """Merge two document graphs into one premise graph.

    Node ids of ``g2`` are shifted past ``g1``; all source edges are kept and
    every cross-document pair with cosine similarity strictly above ``delta``
    gains a bidirectional Lexical edge.
    """
    if not (0.0 < delta <= 1.0):
        raise ContractError(f"delta must be in (0, 1], got {delta}")
    offset = g1.n_nodes
    nodes = list(g1.nodes) + [
        GraphNode(
            id=n.id + offset, span=n.span, text=n.text, feature=n.feature, is_leaf=n.is_leaf
        )
        for n in g2.nodes
    ]
    edges = list(g1.edges) + [(s + offset, t + offset, r) for s, t, r in g2.edges]
    for a, b in _lexical_pairs(g1, g2, delta, leaves_only):
        edges.append((a, b + offset, LEXICAL))
        edges.append((b + offset, a, LEXICAL))
    return RstGraph(nodes=nodes, edges=edges)


def delta_sweep(
    g1: RstGraph, g2: RstGraph, deltas: list[float], leaves_only: bool = False
) -> list[tuple[float, int]]:
    """Count directed Lexical edges the fusion would add at each threshold."""
    if list(deltas) != sorted(deltas):
        raise ContractError("deltas must be sorted ascending")
    rows = []
    for delta in deltas:
        if not (0.0 <= delta <= 1.0):
            raise ContractError(f"delta must be in [0, 1], got {delta}")
        count = 2 * len(_lexical_pairs(g1, g2, delta, leaves_only))
        rows.append((float(delta), count))
    return rows


def dump_graph(graph: RstGraph) -> list[dict]:
    """Adjacency listing (one dict per node) for debugging dumps."""
    adjacency: dict[int, list[dict]] = {n.id: [] for n in graph.nodes}
    for src, dst, rel in graph.edges:
        adjacency[src].append({"relation": rel, "dst": dst})
    listing = []
    for node in graph.nodes:
        listing.append(
            {
                "id": node.id,
                "span": list(node.span),
                "kind": "leaf" if node.is_leaf else "branch",
                "neighbors": adjacency[node.id],
            }
        )
    return listing
