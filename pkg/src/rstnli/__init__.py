"""Cross-document NLI over fused rhetorical-structure graphs.

Pipeline: parsed discourse trees and per-EDU embeddings come in through the
interchange formats; per-document graphs are built and fused across
documents via lexical-similarity edges; a two-layer relation-aware graph
attention network produces premise representations for 3-way entailment
classification, a neutral-constrained triplet objective, and EDU-level
extractive explanations scored from first-layer attention mass.
"""

from .errors import (
    ContractError,
    DataError,
    NumericError,
    ParseError,
    RstNliError,
    ShapeError,
    ValidationError,
)
from .interchange import (
    EMBED_MAGIC,
    LABELS,
    Document,
    EduSpan,
    EmbeddingTable,
    Instance,
    RstTreeSpec,
    group_instances,
    hash_embed,
    hash_embedding_table,
    instance_from_json,
    instance_to_json,
    load_embeddings,
    load_instances,
    read_embeddings,
    save_instances,
    write_embeddings,
)
from .graph import (
    FUSED_RELATIONS,
    SINGLE_DOC_RELATIONS,
    GraphNode,
    RstGraph,
    build_doc_graph,
    cosine_sim,
    delta_sweep,
    dump_graph,
    fuse_graphs,
)
from .model import GraphTensors, ModelConfig, ParameterStore
from .train import (
    EvalReport,
    TrainConfig,
    TrainReport,
    evaluate,
    full_model_grad_check,
    load_checkpoint,
    make_batches,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
