"""Semantic KV-cache compression.

Delimiter-aligned chunking, greedy seed-based key clustering, mean-pooled
semantic cores and cluster-size-weighted (proportional) attention.
"""

from .attention import AttentionOutput, proportional_attention, standard_attention, weighted_softmax_oracle
from .cache_model import (
    DEFAULT_DELIMITER_STRINGS,
    DelimiterSpec,
    InvalidCacheError,
    KvCache,
    MultiHeadCache,
    TokenRecord,
    Violation,
    validate_cache,
)
from .chunker import Chunk, ChunkedCache, Delimiter, chunk, chunk_fixed
from .gsc import Cluster, ClusterPartition, DegenerateKeyWarning, check_tau, cluster_all, cluster_chunk, cosine_sim
from .io_format import load_cache, load_compressed, save_cache, save_compressed
from .merger import (
    CompressedCache,
    CompressedEntry,
    FixedChunking,
    compress,
    compress_multi_head,
    merge_cluster,
    tau_for_budget,
)
from .pipeline import compress_and_attend

__version__ = "0.1.0"

__all__ = [
    "AttentionOutput",
    "Chunk",
    "ChunkedCache",
    "Cluster",
    "ClusterPartition",
    "CompressedCache",
    "CompressedEntry",
    "DEFAULT_DELIMITER_STRINGS",
    "DegenerateKeyWarning",
    "Delimiter",
    "DelimiterSpec",
    "FixedChunking",
    "InvalidCacheError",
    "KvCache",
    "MultiHeadCache",
    "TokenRecord",
    "Violation",
    "check_tau",
    "chunk",
    "chunk_fixed",
    "cluster_all",
    "cluster_chunk",
    "compress",
    "compress_and_attend",
    "compress_multi_head",
    "cosine_sim",
    "load_cache",
    "load_compressed",
    "merge_cluster",
    "proportional_attention",
    "save_cache",
    "save_compressed",
    "standard_attention",
    "tau_for_budget",
    "validate_cache",
    "weighted_softmax_oracle",
]
