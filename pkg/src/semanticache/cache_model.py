"""Cache data model shared by every compression stage.

A :class:`KvCache` holds the key/value states of one attention head as an
ordered tuple of :class:`TokenRecord`. Stacked numpy views (``keys``,
``values``, ``positions``, ``delimiter_mask``) are built lazily and cached;
all arrays handed out are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

# Surface strings used as chunk boundaries. The engine itself is
# tokenizer-agnostic; producers map these to token ids or per-token flags.
DEFAULT_DELIMITER_STRINGS = (".", ",", "?", "!", ";", ":", " ", "\t", "\n")


class InvalidCacheError(ValueError):
    """Raised when a cache violates the data-model invariants."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:3])
        more = f" (+{len(self.violations) - 3} more)" if len(self.violations) > 3 else ""
        super().__init__(f"invalid cache: {head}{more}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TokenRecord:
    key: np.ndarray
    value: np.ndarray
    position: int
    is_delimiter: bool = False

    @property
    def dim(self) -> int:
        return int(self.key.shape[0])


@dataclass(frozen=True)
class Violation:
    index: int
    invariant: str
    detail: str = ""

    def __str__(self) -> str:
        s = f"record {self.index}: {self.invariant}"
        return f"{s} ({self.detail})" if self.detail else s


@dataclass(frozen=True, eq=False)
class KvCache:
    """Ordered token records of a single head with embedding dimension ``dim``."""

    records: tuple[TokenRecord, ...]
    dim: int

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    @classmethod
    def from_arrays(
        cls,
        keys: np.ndarray,
        values: np.ndarray,
        positions: np.ndarray | Sequence[int] | None = None,
        delimiters: np.ndarray | Sequence[bool] | None = None,
    ) -> "KvCache":
        keys = _readonly(np.array(keys, copy=True))
        values = _readonly(np.array(values, copy=True))
        if keys.ndim != 2 or values.ndim != 2:
            raise ValueError("keys and values must be 2-D (n, d)")
        if keys.shape != values.shape:
            raise ValueError(f"keys {keys.shape} and values {values.shape} differ in shape")
        n, d = keys.shape
        if positions is None:
            positions = np.arange(n, dtype=np.int64)
        positions = _readonly(np.asarray(positions, dtype=np.int64).copy())
        if delimiters is None:
            delimiters = np.zeros(n, dtype=bool)
        delimiters = _readonly(np.asarray(delimiters, dtype=bool).copy())
        if positions.shape != (n,) or delimiters.shape != (n,):
            raise ValueError("positions and delimiters must have one entry per token")
        records = tuple(
            TokenRecord(keys[i], values[i], int(positions[i]), bool(delimiters[i]))
            for i in range(n)
        )
        cache = cls(records, d)
        # Seed the lazy views so they share memory with the records.
        cache.__dict__.update(
            keys=keys, values=values, positions=positions, delimiter_mask=delimiters
        )
        return cache

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def keys(self) -> np.ndarray:
        if not self.records:
            return _readonly(np.zeros((0, self.dim), dtype=np.float32))
        return _readonly(np.stack([r.key for r in self.records]))

    @cached_property
    def values(self) -> np.ndarray:
        if not self.records:
            return _readonly(np.zeros((0, self.dim), dtype=np.float32))
        return _readonly(np.stack([r.value for r in self.records]))

    @cached_property
    def positions(self) -> np.ndarray:
        return _readonly(np.array([r.position for r in self.records], dtype=np.int64))

    @cached_property
    def delimiter_mask(self) -> np.ndarray:
        return _readonly(np.array([r.is_delimiter for r in self.records], dtype=bool))

    def with_delimiters(self, mask: Sequence[bool] | np.ndarray) -> "KvCache":
        """Return a copy whose delimiter flags are replaced by ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(self),):
            raise ValueError("mask length must equal record count")
        return KvCache.from_arrays(self.keys, self.values, self.positions, mask)


def validate_cache(cache: KvCache) -> list[Violation]:
    """Check every KvCache invariant; an empty list means the cache is well formed."""
    report: list[Violation] = []
    d = cache.dim
    if not isinstance(d, (int, np.integer)) or d <= 0:
        report.append(Violation(-1, "dim-positive", f"dim={d!r}"))
    prev = None
    for i, rec in enumerate(cache.records):
        k = np.asarray(rec.key)
        v = np.asarray(rec.value)
        if k.ndim != 1 or k.shape[0] != d:
            report.append(Violation(i, "key-length", f"key shape {k.shape}, dim {d}"))
        if v.ndim != 1 or v.shape[0] != d:
            report.append(Violation(i, "value-length", f"value shape {v.shape}, dim {d}"))
        pos = rec.position
        if pos < 0:
            report.append(Violation(i, "position-non-negative", f"position {pos}"))
        if prev is not None:
            if pos == prev:
                report.append(Violation(i, "position-unique", f"duplicate position {pos}"))
            elif pos < prev:
                report.append(Violation(i, "position-ascending", f"{pos} after {prev}"))
        prev = pos
    return report


def require_valid(cache: KvCache) -> None:
    report = validate_cache(cache)
    if report:
        raise InvalidCacheError(report)


@dataclass(frozen=True)
class DelimiterSpec:
    """How delimiter identity is supplied for a cache.

    ``flag-driven`` trusts the per-record ``is_delimiter`` flags. ``token-id-set``
    recomputes flags from the token ids of the cached sequence.
    """

    mode: str = "flag-driven"
    token_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.mode not in ("flag-driven", "token-id-set"):
            raise ValueError(f"unknown delimiter mode {self.mode!r}")
        object.__setattr__(self, "token_ids", frozenset(int(t) for t in self.token_ids))
        if self.mode == "token-id-set" and not self.token_ids:
            raise ValueError("token-id-set mode needs at least one delimiter token id")

    @classmethod
    def from_vocab(
        cls, vocab: Mapping[str, int], strings: Iterable[str] = DEFAULT_DELIMITER_STRINGS
    ) -> "DelimiterSpec":
        """Build a token-id-set spec from a ``token string -> id`` vocabulary.

        Only tokens whose surface string is exactly one of ``strings`` count.
        """
        wanted = set(strings)
        ids = {tid for tok, tid in vocab.items() if tok in wanted}
        return cls("token-id-set", frozenset(ids))

    def mask(self, token_ids: Sequence[int]) -> np.ndarray:
        ids = np.asarray(token_ids, dtype=np.int64)
        return np.isin(ids, np.fromiter(self.token_ids, dtype=np.int64, count=len(self.token_ids)))

    def apply(self, cache: KvCache, token_ids: Sequence[int] | None = None) -> KvCache:
        if self.mode == "flag-driven":
            return cache
        if token_ids is None or len(token_ids) != len(cache):
            raise ValueError("token-id-set mode needs one token id per cached record")
        return cache.with_delimiters(self.mask(token_ids))


@dataclass(frozen=True, eq=False)
class MultiHeadCache:
    heads: tuple[KvCache, ...]

    def __post_init__(self):
        if not isinstance(self.heads, tuple):
            object.__setattr__(self, "heads", tuple(self.heads))

    @property
    def dim(self) -> int:
        return self.heads[0].dim

    @property
    def n(self) -> int:
        return len(self.heads[0])

    def __len__(self) -> int:
        return len(self.heads)

    def __iter__(self):
        return iter(self.heads)

    def __getitem__(self, i: int) -> KvCache:
        return self.heads[i]


def validate_multi_head(mh: MultiHeadCache) -> list[str]:
    """Per-head validation plus the cross-head invariants. Returns messages."""
    problems: list[str] = []
    if len(mh.heads) == 0:
        return ["multi-head cache has no heads"]
    first = mh.heads[0]
    for h, head in enumerate(mh.heads):
        problems.extend(f"head {h}: {v}" for v in validate_cache(head))
        if head.dim != first.dim:
            problems.append(f"head {h}: dim {head.dim} != {first.dim}")
        if len(head) != len(first):
            problems.append(f"head {h}: length {len(head)} != {len(first)}")
        elif not np.array_equal(head.delimiter_mask, first.delimiter_mask):
            problems.append(f"head {h}: delimiter flags differ from head 0")
    return problems
