"""Scaled dot-product attention and its cluster-size-weighted variant.

Both kernels compute in float64 with max-subtraction. The proportional form
adds ``log(weight)`` to every logit before the max is taken, so a core
standing in for ``s`` tokens gets ``s`` times the post-exponential mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .merger import CompressedCache


@dataclass(frozen=True, eq=False)
class AttentionOutput:
    rows: np.ndarray
    # per-query distribution over cache entries; only filled when requested
    probe: np.ndarray | None = None


def _as_queries(Q, d: int) -> np.ndarray:
    q = np.asarray(Q, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.ndim != 2 or q.shape[0] < 1:
        raise ValueError("queries must be a non-empty (q, d) matrix")
    if q.shape[1] != d:
        raise ValueError(f"query dim {q.shape[1]} != cache dim {d}")
    return q


def _attend(q: np.ndarray, keys: np.ndarray, values: np.ndarray, bias: np.ndarray | None, probe: bool) -> AttentionOutput:
    logits = q @ keys.T
    logits *= 1.0 / np.sqrt(keys.shape[1])
    if bias is not None:
        logits += bias
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    out = logits @ values
    return AttentionOutput(out, logits if probe else None)


def _check_kv(keys: np.ndarray, values: np.ndarray) -> None:
    if keys.ndim != 2 or values.ndim != 2:
        raise ValueError("keys and values must be 2-D")
    if keys.shape[0] == 0:
        raise ValueError("attention over an empty cache")
    if keys.shape != values.shape:
        raise ValueError(f"keys {keys.shape} and values {values.shape} differ in shape")


def standard_attention(Q, keys, values, *, probe: bool = False) -> AttentionOutput:
    """``softmax(Q K^T / sqrt(d)) V`` for each query row."""
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    _check_kv(keys, values)
    return _attend(_as_queries(Q, keys.shape[1]), keys, values, None, probe)


def proportional_attention(Q, cache: CompressedCache, *, probe: bool = False) -> AttentionOutput:
    """``softmax(Q K_c^T / sqrt(d) + log s) V_c`` with ``s`` the entry weights."""
    if len(cache) == 0:
        raise ValueError("attention over an empty cache")
    bias = cache.log_weights  # raises on weights < 1
    keys, values = cache.keys64, cache.values64
    _check_kv(keys, values)
    return _attend(_as_queries(Q, cache.dim), keys, values, bias, probe)


def weighted_softmax_oracle(logits, s, values) -> np.ndarray:
    """Reference form: ``sum_j s_j e^{l_j} V_j / sum_j s_j e^{l_j}``.

    No log offset and no max shift; keep logits moderate (|l| <~ 700).
    """
    logits = np.asarray(logits, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if logits.ndim != 1 or s.shape != logits.shape or values.ndim != 2 or values.shape[0] != logits.shape[0]:
        raise ValueError("logits, s and values rows must have matching lengths")
    w = s * np.exp(logits)
    return (w @ values) / w.sum()
