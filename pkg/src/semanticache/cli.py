"""Command-line harness: ``compress``, ``gen``, ``verify`` and ``bench``.

Exit codes
    0  success
    1  verify found a failing property (or could not read an input)
    2  usage error
    3  I/O error (missing or unwritable file)
    4  bad magic
    5  version mismatch
    6  CRC mismatch
    7  truncated dump
    8  dump invariant violated
    9  other format or input error
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import io_format
from .bench import bench_metadata, run_bench, write_csv
from .checks import check_compression, check_partition, check_semantic_delimiters
from .chunker import chunk, chunk_fixed
from .gsc import DEFAULT_TAU, check_tau, cluster_all
from .merger import FixedChunking, compress, compress_multi_head, parse_chunking
from .synthetic import SyntheticSpec, generate

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INPUT = 9


def _tau(text: str) -> float:
    try:
        return check_tau(float(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _chunking(text: str):
    try:
        return parse_chunking(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tau_grid(text: str) -> list[float]:
    return [_tau(t) for t in text.split(",") if t.strip()]


def _load_spec(path: str) -> SyntheticSpec:
    return SyntheticSpec.from_json(path)


def cmd_compress(args) -> int:
    mh = io_format.load_cache(args.input)
    out = compress_multi_head(mh, args.tau, args.chunking, max_workers=args.workers)
    io_format.save_compressed(out, args.output)
    for h, cc in enumerate(out):
        print(f"head {h}: retained {cc.retained_fraction:.4f} ({cc.original_len} -> {len(cc)} entries)")
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = _load_spec(args.spec)
    io_format.save_cache(generate(spec), args.output)
    print(f"wrote {spec.heads} head(s), n={spec.n}, d={spec.d} to {args.output}")
    return EXIT_OK


def _verify(args) -> list[str]:
    """Run every property; return (name, detail) failures in check order."""
    tau = DEFAULT_TAU if args.tau is None else args.tau
    try:
        mh = io_format.load_cache(args.input)
    except io_format.DumpFormatError as exc:
        return [f"load-input: {type(exc).__name__}: {exc}"]

    fails: list[str] = []
    fixed = isinstance(args.chunking, FixedChunking)
    own = []
    for h, head in enumerate(mh.heads):
        chunked = chunk_fixed(head, args.chunking.block) if fixed else chunk(head)
        if chunked.flatten() != list(range(len(head))):
            fails.append(f"head {h}: chunk-cover: segments do not reproduce the source order")
        for c, part in zip(chunked.chunks, cluster_all(chunked, tau)):
            fails.extend(f"head {h}: {f}" for f in check_partition(head, c.indices, part, tau))
        cc = compress(head, tau, args.chunking)
        own.append(cc)
        fails.extend(f"head {h}: {f}" for f in check_compression(head, cc))
        if not fixed:
            fails.extend(f"head {h}: {f}" for f in check_semantic_delimiters(head, cc))
    if fails or not args.compressed:
        return fails

    try:
        given = io_format.load_compressed(args.compressed)
    except io_format.DumpFormatError as exc:
        return [f"load-compressed: {type(exc).__name__}: {exc}"]
    if len(given) != len(mh):
        return [f"head-count: compressed file has {len(given)} heads, input has {len(mh)}"]
    for h, (head, cc) in enumerate(zip(mh.heads, given)):
        fails.extend(f"head {h} (compressed file): {f}" for f in check_compression(head, cc))
        if not fixed:
            fails.extend(f"head {h} (compressed file): {f}" for f in check_semantic_delimiters(head, cc))
    if not fails and args.tau is not None:
        if io_format.dumps_compressed(given) != io_format.dumps_compressed(own):
            fails.append(f"recompress: compressed file differs from a fresh compression at tau={tau}")
    return fails


def cmd_verify(args) -> int:
    fails = _verify(args)
    if fails:
        print(f"FAIL {fails[0]}")
        for f in fails[1:]:
            print(f"     {f}", file=sys.stderr)
        return EXIT_VERIFY
    print("PASS all properties")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = _load_spec(args.spec)
    rows = run_bench(
        spec, args.tau_grid, args.queries, args.repeats, seeds=args.seeds, chunking=args.chunking, max_workers=args.workers
    )
    write_csv(rows, args.csv, bench_metadata(spec, args.chunking, args.workers, args.seeds))
    for r in rows:
        print(
            f"tau={r.tau:.2f} retained={r.retained_fraction:.4f} removed={r.removed_fraction_pct:.1f}% "
            f"full={r.attention_time_full * 1e6:.1f}us compressed={r.attention_time_compressed * 1e6:.1f}us "
            f"speedup={r.speedup:.2f}x"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semanticache", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress a cache dump")
    c.add_argument("--input", required=True)
    c.add_argument("--tau", type=_tau, required=True)
    c.add_argument("--chunking", type=_chunking, default="semantic", help="semantic | fixed:<block>")
    c.add_argument("--output", required=True)
    c.add_argument("--workers", type=int, default=None, help="threads for per-head compression")
    c.set_defaults(func=cmd_compress)

    g = sub.add_parser("gen", help="generate a synthetic cache dump")
    g.add_argument("--spec", required=True, help="JSON file with SyntheticSpec fields")
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="check structural properties of a dump")
    v.add_argument("--input", required=True)
    v.add_argument("--compressed", default=None)
    v.add_argument("--tau", type=_tau, default=None, help=f"clustering threshold (default {DEFAULT_TAU}); "
                   "with --compressed, also recompress and compare")
    v.add_argument("--chunking", type=_chunking, default="semantic")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="tau sweep with decode-attention timings")
    b.add_argument("--spec", required=True)
    b.add_argument("--tau-grid", type=_tau_grid, default=[0.5, 0.6, 0.7, 0.8, 0.9])
    b.add_argument("--queries", type=int, default=16)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seeds", type=int, default=1, help="average retention over this many rng seeds")
    b.add_argument("--chunking", type=_chunking, default="semantic")
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--csv", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except io_format.DumpFormatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
