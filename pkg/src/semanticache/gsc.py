"""Key-cosine similarity and greedy seed-based clustering within a chunk."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache_model import KvCache
from .chunker import ChunkedCache

DEFAULT_TAU = 0.7
TAU_RANGE = (0.5, 0.9)


class DegenerateKeyWarning(RuntimeWarning):
    """A zero-norm key took part in a similarity computation."""


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [-1, 1], got {tau}")
    return tau


def cosine_sim(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    A zero-norm input yields 0.0 and emits :class:`DegenerateKeyWarning`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity of a zero-norm vector", DegenerateKeyWarning, stacklevel=2)
        return 0.0
    return min(1.0, max(-1.0, float(a @ b) / (na * nb)))


@dataclass(frozen=True)
class Cluster:
    seed_index: int
    member_indices: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.member_indices)


@dataclass(frozen=True)
class ClusterPartition:
    clusters: tuple[Cluster, ...]
    # instrumentation: pairwise similarity evaluations and zero-norm keys seen
    similarity_evals: int = 0
    zero_norm_keys: int = 0

    def __len__(self) -> int:
        return len(self.clusters)

    def as_lists(self) -> list[list[int]]:
        return [list(c.member_indices) for c in self.clusters]


def _check_chunk(cache: KvCache, chunk: Sequence[int], allow_delimiters: bool) -> np.ndarray:
    idx = np.asarray(chunk, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("chunk must be a flat sequence of record indices")
    if idx.size == 0:
        return idx
    if idx[0] < 0 or idx[-1] >= len(cache):
        raise IndexError(f"chunk indices out of range for cache of {len(cache)} records")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("chunk indices must be strictly ascending")
    if not allow_delimiters and np.any(cache.delimiter_mask[idx]):
        raise ValueError("chunk contains delimiter records")
    return idx


def cluster_chunk(
    cache: KvCache,
    chunk: Sequence[int],
    tau: float,
    *,
    allow_delimiters: bool = False,
) -> ClusterPartition:
    """Greedy seed-based clustering of one chunk.

    A single forward pass: the first unassigned record seeds a cluster and
    absorbs every later unassigned record whose key similarity to the seed
    is strictly greater than ``tau``. Absorbed records are never revisited.
    """
    tau = check_tau(tau)
    idx = _check_chunk(cache, chunk, allow_delimiters)
    l = idx.size
    if l == 0:
        return ClusterPartition(())

    keys = np.asarray(cache.keys[idx], dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", keys, keys))
    degenerate = norms == 0.0
    assigned = np.zeros(l, dtype=bool)
    clusters: list[Cluster] = []
    evals = 0

    for i in range(l):
        if assigned[i]:
            continue
        assigned[i] = True
        members = [i]
        cand = np.flatnonzero(~assigned[i + 1 :]) + (i + 1)
        evals += cand.size
        if cand.size and not degenerate[i]:
            cand = cand[~degenerate[cand]]
            sims = (keys[cand] @ keys[i]) / (norms[cand] * norms[i])
            np.clip(sims, -1.0, 1.0, out=sims)
            hit = cand[sims > tau]
            assigned[hit] = True
            members.extend(hit.tolist())
        gidx = tuple(int(idx[m]) for m in members)
        clusters.append(Cluster(gidx[0], gidx))

    return ClusterPartition(tuple(clusters), evals, int(degenerate.sum()))


def cluster_all(
    chunked: ChunkedCache, tau: float, *, max_workers: int | None = None
) -> list[ClusterPartition]:
    """One partition per chunk segment, in segment order.

    With ``max_workers > 1`` chunks are clustered on a thread pool; the result
    does not depend on scheduling since each chunk is independent.
    """
    tau = check_tau(tau)
    allow = chunked.mode == "fixed"
    chunks = chunked.chunks
    cache = chunked.source

    def run(c):
        return cluster_chunk(cache, c.indices, tau, allow_delimiters=allow)

    if max_workers and max_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run, chunks))
    return [run(c) for c in chunks]
