"""Binary and JSON interchange formats for caches and compressed caches.

Binary layout (all little-endian)::

    header   magic "SCKV" | version u16 | flags u16 | head_count u32 | n u32 | d u32
    [compressed only] original_len u32
    per head, uncompressed:
        keys f32[n*d] | values f32[n*d] | positions u32[n] | delimiter u8[n]
    per head, compressed:
        entry_count u32 | keys f32[m*d] | values f32[m*d] | positions u32[m]
        | weights u32[m] | kinds u8[m]
    crc32 u32 over every preceding byte

Flag bit 0 marks a compressed dump; the other bits are reserved and must be 0.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .cache_model import KvCache, MultiHeadCache, validate_multi_head
from .merger import CORE, DELIMITER, CompressedCache, check_compressed

MAGIC = b"SCKV"
VERSION = 1
FLAG_COMPRESSED = 0x0001
KNOWN_FLAGS = FLAG_COMPRESSED

_HEADER = struct.Struct("<4sHHIII")
_U32 = struct.Struct("<I")
_U32_MAX = 0xFFFFFFFF


class DumpFormatError(ValueError):
    """Base class for unreadable or malformed dumps. ``code`` doubles as a CLI exit code."""

    code = 9


class BadMagicError(DumpFormatError):
    code = 4


class VersionMismatchError(DumpFormatError):
    code = 5


class CrcMismatchError(DumpFormatError):
    code = 6


class TruncatedDumpError(DumpFormatError):
    code = 7


class DumpInvariantError(DumpFormatError):
    code = 8


def _as_multi_head(mh) -> MultiHeadCache:
    if isinstance(mh, KvCache):
        return MultiHeadCache((mh,))
    if isinstance(mh, MultiHeadCache):
        return mh
    return MultiHeadCache(tuple(mh))


def _u32_array(a: np.ndarray, what: str) -> bytes:
    a = np.asarray(a)
    if a.size and (a.min() < 0 or a.max() > _U32_MAX):
        raise ValueError(f"{what} out of u32 range")
    return a.astype("<u4").tobytes()


def _f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _seal(body: bytearray) -> bytes:
    body += _U32.pack(zlib.crc32(body) & _U32_MAX)
    return bytes(body)


# -- uncompressed ------------------------------------------------------------


def dumps_cache(mh: MultiHeadCache | KvCache) -> bytes:
    mh = _as_multi_head(mh)
    problems = validate_multi_head(mh)
    if problems:
        raise ValueError("refusing to save invalid cache: " + "; ".join(problems[:3]))
    n, d = mh.n, mh.dim
    buf = bytearray(_HEADER.pack(MAGIC, VERSION, 0, len(mh), n, d))
    for head in mh.heads:
        buf += _f32(head.keys.reshape(n, d))
        buf += _f32(head.values.reshape(n, d))
        buf += _u32_array(head.positions, "position")
        buf += head.delimiter_mask.astype(np.uint8).tobytes()
    return _seal(buf)


def _read_header(data: bytes, compressed: bool) -> tuple[int, int, int, int]:
    if len(data) < _HEADER.size + _U32.size:
        raise TruncatedDumpError(f"file of {len(data)} bytes is shorter than a header")
    magic, version, flags, heads, n, d = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {VERSION}")
    if flags & ~KNOWN_FLAGS:
        raise DumpFormatError(f"reserved flag bits set: {flags:#06x}")
    if bool(flags & FLAG_COMPRESSED) != compressed:
        kind = "compressed" if flags & FLAG_COMPRESSED else "uncompressed"
        raise DumpFormatError(f"file holds a {kind} dump")
    return flags, heads, n, d


def _check_crc(data: bytes) -> None:
    (stored,) = _U32.unpack_from(data, len(data) - 4)
    actual = zlib.crc32(data[:-4]) & _U32_MAX
    if stored != actual:
        raise CrcMismatchError(f"CRC mismatch: stored {stored:#010x}, computed {actual:#010x}")


def loads_cache(data: bytes) -> MultiHeadCache:
    _, heads, n, d = _read_header(data, compressed=False)
    if heads < 1 or d < 1:
        raise DumpInvariantError(f"header declares {heads} heads, dim {d}")
    per_head = n * d * 8 + n * 5
    expected = _HEADER.size + heads * per_head + 4
    if len(data) < expected:
        raise TruncatedDumpError(f"expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise DumpFormatError(f"{len(data) - expected} trailing bytes after payload")
    _check_crc(data)

    off = _HEADER.size
    out = []
    for _ in range(heads):
        keys = np.frombuffer(data, "<f4", n * d, off).reshape(n, d)
        off += n * d * 4
        values = np.frombuffer(data, "<f4", n * d, off).reshape(n, d)
        off += n * d * 4
        positions = np.frombuffer(data, "<u4", n, off)
        off += n * 4
        flags = np.frombuffer(data, np.uint8, n, off)
        off += n
        if np.any(flags > 1):
            raise DumpInvariantError("delimiter flag byte outside {0, 1}")
        out.append(
            KvCache.from_arrays(
                keys.astype(np.float32), values.astype(np.float32), positions.astype(np.int64), flags.astype(bool)
            )
        )
    mh = MultiHeadCache(tuple(out))
    problems = validate_multi_head(mh)
    if problems:
        raise DumpInvariantError("; ".join(problems[:3]))
    return mh


# -- compressed --------------------------------------------------------------


def dumps_compressed(caches: Sequence[CompressedCache]) -> bytes:
    caches = list(caches)
    if not caches:
        raise ValueError("need at least one compressed head")
    d, n = caches[0].dim, caches[0].original_len
    for cc in caches:
        if cc.dim != d or cc.original_len != n:
            raise ValueError("all heads must share dim and original length")
        problems = check_compressed(cc)
        if problems:
            raise ValueError("refusing to save invalid compressed cache: " + problems[0])
    buf = bytearray(_HEADER.pack(MAGIC, VERSION, FLAG_COMPRESSED, len(caches), n, d))
    buf += _U32.pack(n)
    for cc in caches:
        m = len(cc)
        buf += _U32.pack(m)
        buf += _f32(cc.keys.reshape(m, d))
        buf += _f32(cc.values.reshape(m, d))
        buf += _u32_array(cc.positions, "position")
        buf += _u32_array(cc.weights, "weight")
        buf += cc.kinds.astype(np.uint8).tobytes()
    return _seal(buf)


def loads_compressed(data: bytes) -> list[CompressedCache]:
    _, heads, n, d = _read_header(data, compressed=True)
    if len(data) < _HEADER.size + 8:
        raise TruncatedDumpError("file ends inside the header")
    # entry counts sit inside the checksummed body, so verify it before walking
    _check_crc(data)
    (original_len,) = _U32.unpack_from(data, _HEADER.size)
    if heads < 1 or d < 1:
        raise DumpInvariantError(f"header declares {heads} heads, dim {d}")
    if original_len != n:
        raise DumpInvariantError(f"original_len {original_len} != header n {n}")

    end = len(data) - 4
    off = _HEADER.size + 4
    out = []
    for h in range(heads):
        if off + 4 > end:
            raise TruncatedDumpError(f"head {h}: missing entry count")
        (m,) = _U32.unpack_from(data, off)
        off += 4
        need = m * d * 8 + m * 9
        if off + need > end:
            raise TruncatedDumpError(f"head {h}: {m} entries need {need} bytes, {end - off} left")
        keys = np.frombuffer(data, "<f4", m * d, off).reshape(m, d).astype(np.float32)
        off += m * d * 4
        values = np.frombuffer(data, "<f4", m * d, off).reshape(m, d).astype(np.float32)
        off += m * d * 4
        positions = np.frombuffer(data, "<u4", m, off).astype(np.int64)
        off += m * 4
        weights = np.frombuffer(data, "<u4", m, off).astype(np.int64)
        off += m * 4
        kinds = np.frombuffer(data, np.uint8, m, off).copy()
        off += m
        if np.any((kinds != CORE) & (kinds != DELIMITER)):
            raise DumpInvariantError(f"head {h}: entry kind outside {{0, 1}}")
        cc = CompressedCache(keys, values, weights, positions, kinds, d, original_len)
        problems = check_compressed(cc)
        if problems:
            raise DumpInvariantError(f"head {h}: {problems[0]}")
        out.append(cc)
    if off != end:
        raise DumpFormatError(f"{end - off} trailing bytes after payload")
    return out


# -- JSON mirror -------------------------------------------------------------


def cache_to_json(mh: MultiHeadCache | KvCache) -> dict:
    mh = _as_multi_head(mh)
    return {
        "format": MAGIC.decode(),
        "version": VERSION,
        "dim": mh.dim,
        "n": mh.n,
        "heads": [
            {
                # float32 -> float64 is exact and repr() round-trips float64
                "keys": np.asarray(h.keys, dtype=np.float32).astype(np.float64).tolist(),
                "values": np.asarray(h.values, dtype=np.float32).astype(np.float64).tolist(),
                "positions": [int(p) for p in h.positions],
                "delimiters": [int(f) for f in h.delimiter_mask],
            }
            for h in mh.heads
        ],
    }


def cache_from_json(obj: dict) -> MultiHeadCache:
    try:
        if obj.get("format") != MAGIC.decode():
            raise BadMagicError(f"bad JSON format tag {obj.get('format')!r}")
        if obj.get("version") != VERSION:
            raise VersionMismatchError(f"unsupported version {obj.get('version')}")
        d = int(obj["dim"])
        heads = []
        for h in obj["heads"]:
            n = len(h["positions"])
            keys = np.array(h["keys"], dtype=np.float32).reshape(n, d)
            values = np.array(h["values"], dtype=np.float32).reshape(n, d)
            flags = np.array(h.get("delimiters", [0] * n), dtype=np.int64)
            if np.any((flags != 0) & (flags != 1)):
                raise DumpInvariantError("delimiter flag outside {0, 1}")
            heads.append(KvCache.from_arrays(keys, values, np.array(h["positions"], dtype=np.int64), flags.astype(bool)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DumpFormatError):
            raise
        raise DumpFormatError(f"malformed JSON cache: {exc}") from None
    mh = MultiHeadCache(tuple(heads))
    problems = validate_multi_head(mh)
    if problems:
        raise DumpInvariantError("; ".join(problems[:3]))
    if "n" in obj and obj["n"] != mh.n:
        raise DumpInvariantError(f"declared n {obj['n']} != {mh.n}")
    return mh


# -- path helpers ------------------------------------------------------------


def _is_json(path: Path) -> bool:
    return path.suffix.lower() == ".json"


def load_cache(path: str | os.PathLike) -> MultiHeadCache:
    path = Path(path)
    data = path.read_bytes()
    if _is_json(path) and not data.startswith(MAGIC):
        try:
            obj = json.loads(data)
        except json.JSONDecodeError as exc:
            raise DumpFormatError(f"{path}: not valid JSON: {exc}") from None
        return cache_from_json(obj)
    return loads_cache(data)


def save_cache(mh: MultiHeadCache | KvCache, path: str | os.PathLike) -> None:
    path = Path(path)
    if _is_json(path):
        path.write_text(json.dumps(cache_to_json(mh)) + "\n")
    else:
        path.write_bytes(dumps_cache(mh))


def load_compressed(path: str | os.PathLike) -> list[CompressedCache]:
    return loads_compressed(Path(path).read_bytes())


def save_compressed(caches: Sequence[CompressedCache], path: str | os.PathLike) -> None:
    Path(path).write_bytes(dumps_compressed(caches))
