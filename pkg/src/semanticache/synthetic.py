"""Seeded synthetic caches with planted key clusters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .cache_model import KvCache, MultiHeadCache


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    heads: int = 1
    cluster_count: int = 32
    noise_sigma: float = 0.05
    delimiter_period: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n", "d", "heads", "cluster_count"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.delimiter_period, int) or self.delimiter_period < 2:
            raise ValueError(f"delimiter_period must be an integer >= 2, got {self.delimiter_period!r}")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "SyntheticSpec":
        return SyntheticSpec(**{**asdict(self), "rng_seed": seed})


# Trend workload: 63-token chunks over 32 planted directions. With d=128 and
# sigma=0.05 same-cluster key similarities sit around 0.76, inside the tau grid.
STANDARD_SPEC = SyntheticSpec(n=1024, d=128, heads=1, cluster_count=32, noise_sigma=0.05, delimiter_period=64)

# Latency workload: long context, ~13% retained at tau <= 0.6.
DECODE_SPEC = SyntheticSpec(n=32768, d=128, heads=1, cluster_count=16, noise_sigma=0.05, delimiter_period=128)


def delimiter_mask(n: int, period: int) -> np.ndarray:
    """Every ``period``-th token (1-based) is a delimiter."""
    return (np.arange(1, n + 1) % period) == 0


def generate(spec: SyntheticSpec) -> MultiHeadCache:
    """Draw a cache from ``spec``; identical specs give identical caches.

    Per head: unit-norm cluster centres, token ``i`` takes centre
    ``i % cluster_count`` plus N(0, sigma^2) noise (left unnormalised), values
    are standard normal, and delimiter tokens get fresh random keys and values.
    """
    rng = np.random.default_rng(spec.rng_seed)
    n, d = spec.n, spec.d
    mask = delimiter_mask(n, spec.delimiter_period)
    n_delim = int(mask.sum())
    assign = np.arange(n) % spec.cluster_count
    heads = []
    for _ in range(spec.heads):
        centers = rng.standard_normal((spec.cluster_count, d))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        keys = centers[assign] + spec.noise_sigma * rng.standard_normal((n, d))
        values = rng.standard_normal((n, d))
        keys[mask] = rng.standard_normal((n_delim, d))
        values[mask] = rng.standard_normal((n_delim, d))
        heads.append(KvCache.from_arrays(keys.astype(np.float32), values.astype(np.float32), None, mask))
    return MultiHeadCache(tuple(heads))
