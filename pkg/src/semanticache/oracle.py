"""Slow, independent reference implementations for tests.

Nothing here imports the modules it is used to check. Plain Python floats,
explicit loops and exactly rounded sums (``math.fsum``) throughout.
"""

from __future__ import annotations

import math


def _dot(a, b) -> float:
    return math.fsum(float(x) * float(y) for x, y in zip(a, b))


def _sim(ka, kb) -> float | None:
    """Cosine similarity, or None when either key has zero norm."""
    na = math.sqrt(_dot(ka, ka))
    nb = math.sqrt(_dot(kb, kb))
    if na == 0.0 or nb == 0.0:
        return None
    return max(-1.0, min(1.0, _dot(ka, kb) / (na * nb)))


def ref_gsc(keys, tau: float) -> list[list[int]]:
    """Greedy seed-based clustering over the keys of one chunk.

    Returns clusters as lists of chunk-local indices, seed first. A zero-norm
    key is never absorbed and absorbs nothing.
    """
    if not -1.0 <= tau <= 1.0:
        raise ValueError("tau out of range")
    keys = [list(map(float, k)) for k in keys]
    if keys and len({len(k) for k in keys}) != 1:
        raise ValueError("ragged keys")
    l = len(keys)
    assigned = [False] * l
    partition = []
    for i in range(l):
        if not assigned[i]:
            cluster = [i]
            assigned[i] = True
            seed = keys[i]
            for j in range(i + 1, l):
                if not assigned[j]:
                    sim = _sim(seed, keys[j])
                    if sim is not None and sim > tau:
                        cluster.append(j)
                        assigned[j] = True
            partition.append(cluster)
    return partition


def ref_attention(Q, K, V, s=None) -> list[list[float]]:
    """Weighted attention with fsum accumulation, one query at a time."""
    K = [list(map(float, k)) for k in K]
    V = [list(map(float, v)) for v in V]
    m = len(K)
    if m == 0:
        raise ValueError("empty cache")
    if s is None:
        s = [1] * m
    if len(s) != m or len(V) != m:
        raise ValueError("length mismatch")
    d = len(K[0])
    scale = 1.0 / math.sqrt(d)
    out = []
    for q in Q:
        q = list(map(float, q))
        if len(q) != d:
            raise ValueError("query dim mismatch")
        logits = [_dot(q, k) * scale + math.log(sj) for k, sj in zip(K, s)]
        top = max(logits)
        w = [math.exp(x - top) for x in logits]
        z = math.fsum(w)
        out.append([math.fsum(w[j] * V[j][c] for j in range(m)) / z for c in range(len(V[0]))])
    return out
