"""Structural property checks shared by ``verify`` and the test suite.

Each function returns a list of human-readable failures; empty means pass.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .cache_model import KvCache
from .gsc import ClusterPartition
from .merger import CORE, DELIMITER, CompressedCache, check_compressed


def _bits_equal(a: np.ndarray, b: np.ndarray) -> bool:
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


def _cos(a: np.ndarray, b: np.ndarray) -> float | None:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return None
    return min(1.0, max(-1.0, float(a @ b) / (na * nb)))


def check_partition(
    cache: KvCache, chunk: Sequence[int], partition: ClusterPartition, tau: float
) -> list[str]:
    """Disjoint/covering, seed ordering, seed similarity and work bound."""
    fails = []
    chunk = list(chunk)
    members = [i for c in partition.clusters for i in c.member_indices]
    if sorted(members) != chunk or len(set(members)) != len(members):
        fails.append("partition: clusters are not disjoint and covering")
    seeds = [c.seed_index for c in partition.clusters]
    if seeds != sorted(seeds):
        fails.append("partition: clusters not ordered by seed")
    seen: set[int] = set()
    keys = cache.keys
    for c in partition.clusters:
        mi = list(c.member_indices)
        if not mi or mi[0] != c.seed_index or mi != sorted(mi):
            fails.append(f"partition: cluster at seed {c.seed_index} is not seed-first ascending")
        before = [i for i in chunk if i < c.seed_index]
        if any(i not in seen for i in before):
            fails.append(f"first-unassigned: seed {c.seed_index} skips an unassigned earlier index")
        for j in mi[1:]:
            s = _cos(keys[c.seed_index], keys[j])
            if s is None or not s > tau:
                fails.append(f"seed-similarity: member {j} of seed {c.seed_index} has sim {s} <= {tau}")
        seen.update(mi)
    l = len(chunk)
    if partition.similarity_evals > l * (l - 1) // 2:
        fails.append(f"work-bound: {partition.similarity_evals} evaluations > l(l-1)/2 = {l * (l - 1) // 2}")
    return fails


def check_compression(cache: KvCache, cc: CompressedCache) -> list[str]:
    """Invariants linking a compressed cache to the cache it came from."""
    fails = list(check_compressed(cc))
    n = len(cache)
    if cc.original_len != n:
        fails.append(f"weight-conservation: original_len {cc.original_len} != {n}")
    if len(cc) > n:
        fails.append(f"size: {len(cc)} entries > {n} records")
    if cc.dim != cache.dim:
        fails.append(f"dim: {cc.dim} != {cache.dim}")
    if fails:
        return fails

    index_of = {int(p): i for i, p in enumerate(cache.positions)}
    missing = [int(p) for p in cc.positions if int(p) not in index_of]
    if missing:
        return [f"order: entry positions {missing[:5]} not present in source"]
    src = np.array([index_of[int(p)] for p in cc.positions], dtype=np.int64)

    mask = cache.delimiter_mask
    delim_entries = cc.kinds == DELIMITER
    # fixed chunking may fold delimiters into cores, so only the flagged entries are compared
    if np.any(~mask[src[delim_entries]]):
        fails.append("delimiter-transparency: a delimiter entry maps to a non-delimiter record")
    elif not (
        _bits_equal(cc.keys[delim_entries], cache.keys[src[delim_entries]].astype(cc.keys.dtype, copy=False))
        and _bits_equal(cc.values[delim_entries], cache.values[src[delim_entries]].astype(cc.values.dtype, copy=False))
    ):
        fails.append("delimiter-transparency: delimiter entry differs from its source record")

    single = (cc.kinds == CORE) & (cc.weights == 1)
    if not (
        _bits_equal(cc.keys[single], cache.keys[src[single]].astype(cc.keys.dtype, copy=False))
        and _bits_equal(cc.values[single], cache.values[src[single]].astype(cc.values.dtype, copy=False))
    ):
        fails.append("singleton-fidelity: a weight-1 core differs from its source record")
    return fails


def check_semantic_delimiters(cache: KvCache, cc: CompressedCache) -> list[str]:
    """Under semantic chunking every delimiter record must survive as an entry."""
    want = set(cache.positions[cache.delimiter_mask].tolist())
    got = set(cc.positions[cc.kinds == DELIMITER].tolist())
    if want != got:
        return [f"delimiter-transparency: {len(want ^ got)} delimiter positions differ"]
    return []
