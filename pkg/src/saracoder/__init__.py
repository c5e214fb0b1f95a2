"""Repository-level code completion context retrieval.

Indexes a repository into statement-graph slices, refines lexical
candidates through semantic, duplicate, structural, and diversity
stages, resolves the unfinished file's imports into prompt context, and
scores completions with exact-match and identifier metrics.
"""

from .ccg import (
    CCGEdge,
    CCGNode,
    CodeContextGraph,
    GraphSlice,
    SnippetRecord,
    build_ccg,
    enumerate_slices,
    slice_at,
)
from .config import EngineConfig
from .eaid import build_symbol_table, render_pe, resolve_imports
from .embedding import Embedder, LocalHashProvider, RemoteProvider, check_provider_contract, cosine
from .engine import Engine
from .evaluation import edit_similarity, exact_match, identifier_metrics, run_eval
from .hf_op import PipelineConfig, dar_rerank, dsed, rap_dedup, run_pipeline, sad_filter, tpm_score
from .lexical import Candidate, retrieve_initial, tokenize, weighted_jaccard
from .prompt import PromptBundle, assemble
from .store import IndexManifest, SnippetStore, index_repository, load_index

__version__ = "0.1.0"

__all__ = [
    "CCGEdge",
    "CCGNode",
    "Candidate",
    "CodeContextGraph",
    "Embedder",
    "Engine",
    "EngineConfig",
    "GraphSlice",
    "IndexManifest",
    "LocalHashProvider",
    "PipelineConfig",
    "PromptBundle",
    "RemoteProvider",
    "SnippetRecord",
    "SnippetStore",
    "assemble",
    "build_ccg",
    "build_symbol_table",
    "check_provider_contract",
    "cosine",
    "dar_rerank",
    "dsed",
    "edit_similarity",
    "enumerate_slices",
    "exact_match",
    "identifier_metrics",
    "index_repository",
    "load_index",
    "rap_dedup",
    "render_pe",
    "resolve_imports",
    "retrieve_initial",
    "run_eval",
    "run_pipeline",
    "sad_filter",
    "slice_at",
    "tokenize",
    "tpm_score",
    "weighted_jaccard",
]
