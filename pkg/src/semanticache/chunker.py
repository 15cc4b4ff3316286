"""Split a cache into maximal non-delimiter chunks interleaved with delimiters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .cache_model import KvCache, require_valid


@dataclass(frozen=True)
class Chunk:
    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Delimiter:
    index: int


Segment = Union[Chunk, Delimiter]


@dataclass(frozen=True, eq=False)
class ChunkedCache:
    segments: tuple[Segment, ...]
    source: KvCache
    # "fixed" chunks may contain delimiter records; "semantic" ones never do.
    mode: str = "semantic"

    @property
    def chunks(self) -> list[Chunk]:
        return [s for s in self.segments if isinstance(s, Chunk)]

    @property
    def delimiters(self) -> list[Delimiter]:
        return [s for s in self.segments if isinstance(s, Delimiter)]

    def flatten(self) -> list[int]:
        out: list[int] = []
        for seg in self.segments:
            if isinstance(seg, Chunk):
                out.extend(seg.indices)
            else:
                out.append(seg.index)
        return out


def chunk(cache: KvCache) -> ChunkedCache:
    """Delimiter-aligned chunking.

    Every delimiter record becomes its own segment; each maximal run of
    non-delimiter records becomes one chunk. Empty runs are dropped.
    """
    require_valid(cache)
    mask = cache.delimiter_mask
    segments: list[Segment] = []
    start = 0
    for d in np.flatnonzero(mask).tolist():
        if d > start:
            segments.append(Chunk(tuple(range(start, d))))
        segments.append(Delimiter(d))
        start = d + 1
    if start < len(mask):
        segments.append(Chunk(tuple(range(start, len(mask)))))
    return ChunkedCache(tuple(segments), cache)


def chunk_fixed(cache: KvCache, block: int) -> ChunkedCache:
    """Consecutive blocks of ``block`` records; delimiter flags are ignored."""
    if isinstance(block, bool) or not isinstance(block, (int, np.integer)) or block < 1:
        raise ValueError(f"block size must be a positive integer, got {block!r}")
    require_valid(cache)
    n = len(cache)
    segments = tuple(Chunk(tuple(range(s, min(s + block, n)))) for s in range(0, n, block))
    return ChunkedCache(segments, cache, mode="fixed")
