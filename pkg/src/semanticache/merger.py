"""Mean-pool clusters into semantic cores and assemble the compressed cache."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .cache_model import KvCache, MultiHeadCache, validate_multi_head
from .chunker import chunk, chunk_fixed
from .gsc import Cluster, check_tau, cluster_all

CORE = 0
DELIMITER = 1
KIND_NAMES = {CORE: "core", DELIMITER: "delimiter"}

DEFAULT_TAU_GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class FixedChunking:
    block: int = 64

    def __post_init__(self):
        if self.block < 1:
            raise ValueError(f"block size must be >= 1, got {self.block}")

    def __str__(self) -> str:
        return f"fixed:{self.block}"


Chunking = Union[str, FixedChunking]


def parse_chunking(spec: Chunking) -> Chunking:
    """Accept ``"semantic"``, ``"fixed:<block>"`` or a :class:`FixedChunking`."""
    if isinstance(spec, FixedChunking):
        return spec
    if spec == "semantic":
        return "semantic"
    if isinstance(spec, str) and spec.startswith("fixed:"):
        try:
            return FixedChunking(int(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise ValueError(f"bad fixed chunking {spec!r}: {exc}") from None
    raise ValueError(f"unknown chunking {spec!r}; expected 'semantic' or 'fixed:<block>'")


@dataclass(frozen=True, eq=False)
class CompressedEntry:
    key: np.ndarray
    value: np.ndarray
    weight: int
    position: int
    kind: str


@dataclass(frozen=True, eq=False)
class CompressedCache:
    """Cores and preserved delimiters in position order, column-stored.

    ``weights`` holds the cluster size of each entry (1 for delimiters);
    ``kinds`` uses :data:`CORE` / :data:`DELIMITER`.
    """

    keys: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    positions: np.ndarray
    kinds: np.ndarray
    dim: int
    original_len: int

    def __post_init__(self):
        for name in ("keys", "values", "weights", "positions", "kinds"):
            getattr(self, name).flags.writeable = False

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @property
    def entries(self) -> list[CompressedEntry]:
        return [
            CompressedEntry(
                self.keys[i],
                self.values[i],
                int(self.weights[i]),
                int(self.positions[i]),
                KIND_NAMES[int(self.kinds[i])],
            )
            for i in range(len(self))
        ]

    @property
    def retained_fraction(self) -> float:
        return len(self) / self.original_len if self.original_len else 1.0

    # float64 copies reused by the attention kernels
    @cached_property
    def keys64(self) -> np.ndarray:
        return np.ascontiguousarray(self.keys, dtype=np.float64)

    @cached_property
    def values64(self) -> np.ndarray:
        return np.ascontiguousarray(self.values, dtype=np.float64)

    @cached_property
    def log_weights(self) -> np.ndarray:
        if np.any(self.weights < 1):
            raise ValueError("entry weights must be >= 1")
        return np.log(self.weights.astype(np.float64))


def check_compressed(cc: CompressedCache) -> list[str]:
    """Structural invariants of a compressed cache; empty list when all hold."""
    problems = []
    m = len(cc)
    for name in ("keys", "values"):
        arr = getattr(cc, name)
        if arr.shape != (m, cc.dim):
            problems.append(f"{name} shape {arr.shape} != ({m}, {cc.dim})")
    for name in ("positions", "kinds"):
        if getattr(cc, name).shape != (m,):
            problems.append(f"{name} length != {m}")
    if problems:
        return problems
    if np.any(cc.weights < 1):
        problems.append("weight-positive: some entry has weight < 1")
    if np.any(cc.weights[cc.kinds == DELIMITER] != 1):
        problems.append("delimiter-weight: a delimiter entry has weight != 1")
    if not np.all(np.isin(cc.kinds, (CORE, DELIMITER))):
        problems.append("kind: unknown entry kind")
    if np.any(np.diff(cc.positions) <= 0):
        problems.append("order: positions not strictly ascending")
    total = int(cc.weights.sum())
    if total != cc.original_len:
        problems.append(f"weight-conservation: sum of weights {total} != original length {cc.original_len}")
    return problems


def _mean_rows(arr: np.ndarray, members: Sequence[int]) -> np.ndarray:
    if len(members) == 1:
        return arr[members[0]].copy()
    acc = np.asarray(arr[list(members)], dtype=np.float64).sum(axis=0)
    return (acc / len(members)).astype(arr.dtype)


def merge_cluster(cache: KvCache, cluster: Cluster) -> CompressedEntry:
    """Mean of the member keys and values; weight is the member count."""
    members = cluster.member_indices
    if not members:
        raise ValueError("cannot merge an empty cluster")
    if min(members) < 0 or max(members) >= len(cache):
        raise IndexError("cluster member index out of range")
    return CompressedEntry(
        key=_mean_rows(cache.keys, members),
        value=_mean_rows(cache.values, members),
        weight=len(members),
        position=int(cache.positions[cluster.seed_index]),
        kind="core",
    )


def _segment_means(arr: np.ndarray, order: np.ndarray, starts: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    sums = np.add.reduceat(np.asarray(arr[order], dtype=np.float64), starts, axis=0)
    out = (sums / sizes[:, None]).astype(arr.dtype)
    # weight-1 cores copy their source row bit for bit
    single = sizes == 1
    out[single] = arr[order[starts[single]]]
    return out


def _chunked(cache: KvCache, chunking: Chunking):
    mode = parse_chunking(chunking)
    if isinstance(mode, FixedChunking):
        return chunk_fixed(cache, mode.block)
    return chunk(cache)


def compress(
    cache: KvCache,
    tau: float,
    chunking: Chunking = "semantic",
    *,
    max_workers: int | None = None,
) -> CompressedCache:
    """Chunk, cluster and merge one head.

    Delimiter records pass through untouched with weight 1. Entries come back
    sorted by position; each core sits at its seed's position.
    """
    tau = check_tau(tau)
    chunked = _chunked(cache, chunking)
    partitions = cluster_all(chunked, tau, max_workers=max_workers)
    clusters = [c for p in partitions for c in p.clusters]
    delim = np.array([s.index for s in chunked.delimiters], dtype=np.int64)

    d = cache.dim
    dtype = cache.keys.dtype if len(cache) else np.float32
    if clusters:
        sizes = np.array([c.size for c in clusters], dtype=np.int64)
        order = np.fromiter((i for c in clusters for i in c.member_indices), dtype=np.int64, count=int(sizes.sum()))
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        seeds = np.array([c.seed_index for c in clusters], dtype=np.int64)
        core_k = _segment_means(cache.keys, order, starts, sizes)
        core_v = _segment_means(cache.values, order, starts, sizes)
    else:
        sizes = np.zeros(0, dtype=np.int64)
        seeds = np.zeros(0, dtype=np.int64)
        core_k = np.zeros((0, d), dtype=dtype)
        core_v = np.zeros((0, d), dtype=dtype)

    src = np.concatenate((seeds, delim))
    positions = cache.positions[src] if src.size else np.zeros(0, dtype=np.int64)
    keys = np.concatenate((core_k, cache.keys[delim].astype(dtype, copy=False)))
    values = np.concatenate((core_v, cache.values[delim].astype(dtype, copy=False)))
    weights = np.concatenate((sizes, np.ones(delim.size, dtype=np.int64)))
    kinds = np.concatenate((np.full(sizes.size, CORE, np.uint8), np.full(delim.size, DELIMITER, np.uint8)))

    perm = np.argsort(positions, kind="stable")
    return CompressedCache(
        keys=np.ascontiguousarray(keys[perm]),
        values=np.ascontiguousarray(values[perm]),
        weights=weights[perm],
        positions=np.asarray(positions[perm], dtype=np.int64),
        kinds=kinds[perm],
        dim=d,
        original_len=len(cache),
    )


def compress_multi_head(
    mh: MultiHeadCache,
    tau: float,
    chunking: Chunking = "semantic",
    *,
    max_workers: int | None = None,
) -> list[CompressedCache]:
    """Compress each head independently; per-head lengths may differ."""
    problems = validate_multi_head(mh)
    if problems:
        raise ValueError("invalid multi-head cache: " + "; ".join(problems[:3]))
    if max_workers and max_workers > 1 and len(mh) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda h: compress(h, tau, chunking), mh.heads))
    return [compress(h, tau, chunking) for h in mh.heads]


def tau_for_budget(
    cache: KvCache,
    target_retained_fraction: float,
    grid: Sequence[float] = DEFAULT_TAU_GRID,
    chunking: Chunking = "semantic",
) -> tuple[float, float]:
    """Grid-search the threshold whose retained fraction is closest to the target.

    Ties go to the larger threshold (milder compression). Retained fraction is
    not monotone in tau in general, so every grid point is evaluated.
    """
    if len(cache) == 0:
        raise ValueError("cannot target a budget on an empty cache")
    if not 0.0 < target_retained_fraction <= 1.0:
        raise ValueError("target retained fraction must lie in (0, 1]")
    grid = [check_tau(t) for t in grid]
    if not grid:
        raise ValueError("tau grid is empty")
    best: tuple[float, float] | None = None
    best_err = np.inf
    for tau in grid:
        frac = compress(cache, tau, chunking).retained_fraction
        err = abs(frac - target_retained_fraction)
        if err < best_err or (err == best_err and tau > best[0]):
            best, best_err = (tau, frac), err
    return best
