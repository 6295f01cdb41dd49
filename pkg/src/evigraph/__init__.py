"""Knowledge-hypergraph retrieval engine.

Builds a two-tier hypergraph (evidence and topic hyperedges over entity
nodes) from a document corpus and answers queries with random-walk topic
locating plus usefulness-weighted attention ranking of evidence.
"""

from .graph import (
    BipartiteView,
    EdgeWeight,
    Entity,
    Evidence,
    Hypergraph,
    Topic,
    Violation,
)
from .ingest import (
    BuildReport,
    Document,
    IngestionConfig,
    TextUnit,
    build_graph,
    load_corpus,
    split_document,
)
from .relations import DEFAULT_ENTITY_TYPES, HyperRelationMap
from .retrieval import (
    EntityIndex,
    EvidenceFeature,
    RetrievalConfig,
    RetrievalResult,
    SearchCondition,
    load_profile,
    retrieve,
)

__version__ = "0.1.0"

__all__ = [
    "BipartiteView",
    "BuildReport",
    "DEFAULT_ENTITY_TYPES",
    "Document",
    "EdgeWeight",
    "Entity",
    "EntityIndex",
    "Evidence",
    "EvidenceFeature",
    "Hypergraph",
    "HyperRelationMap",
    "IngestionConfig",
    "RetrievalConfig",
    "RetrievalResult",
    "SearchCondition",
    "TextUnit",
    "Topic",
    "Violation",
    "build_graph",
    "load_corpus",
    "load_profile",
    "retrieve",
    "split_document",
    "__version__",
]
