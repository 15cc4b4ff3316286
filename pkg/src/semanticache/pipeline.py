"""One-call compression plus attention for host decode loops."""

from __future__ import annotations

from .attention import AttentionOutput, proportional_attention
from .cache_model import KvCache
from .merger import Chunking, compress


def compress_and_attend(
    cache: KvCache, tau: float, Q, *, chunking: Chunking = "semantic", probe: bool = False
) -> AttentionOutput:
    """Compress ``cache`` from scratch and attend ``Q`` over the result."""
    return proportional_attention(Q, compress(cache, tau, chunking), probe=probe)
