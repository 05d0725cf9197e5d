"""Stance-based data fact retrieval over tabular datasets.

An LLM-driven agent expands a retrieval tree whose nodes hold sub-queries and
deterministically computed, validated data facts extracted from tabular
datasets, ranked by relevance and predicted stance.
"""

from .datastore import (
    Dataset,
    DatasetStore,
    FieldDescriptor,
    SubTable,
    build_dataset,
    execute_query,
    validate_query,
)
from .embeddings import FieldCatalog, HashEmbeddingProvider, relevance
from .engine import (
    ChartSpec,
    ConsistencyReport,
    FactResult,
    canonical_description,
    chart_spec,
    check_description,
    compute_fact,
)
from .facts import DataFact, FactType, Measure, FilterClause, parse_fact, serialize_fact, validate_fact
from .gateway import FactEvaluation, LlmGateway, SubQuery, Transcript
from .tree import (
    ExpansionAction,
    RetrievalConfig,
    RetrievalNode,
    RetrievalTree,
    Retriever,
    load_session,
    node_score,
    rank_facts,
    save_session,
    session_reward,
)

__version__ = "0.1.0"
