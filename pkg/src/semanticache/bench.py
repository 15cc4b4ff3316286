"""Decode-attention microbenchmark and tau sweep report."""

from __future__ import annotations

import csv
import platform
import statistics
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import proportional_attention, standard_attention
from .cache_model import MultiHeadCache
from .merger import Chunking, CompressedCache, compress_multi_head
from .synthetic import SyntheticSpec, generate


@dataclass(frozen=True)
class BenchRow:
    tau: float
    retained_fraction: float
    removed_fraction_pct: float
    attention_time_full: float
    attention_time_compressed: float
    speedup: float


BENCH_FIELDS = [f.name for f in fields(BenchRow)]


def retained_fraction(caches: Sequence[CompressedCache]) -> float:
    """Mean over heads of entries / original length."""
    return float(np.mean([cc.retained_fraction for cc in caches]))


def median_time(step: Callable[[], object], repeats: int, warmup: int = 1) -> float:
    """Median wall time of ``step`` over ``repeats`` runs after ``warmup`` discarded runs."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    for _ in range(warmup):
        step()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        step()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def decode_timings(
    mh: MultiHeadCache,
    compressed: Sequence[CompressedCache],
    queries: np.ndarray,
    repeats: int,
) -> tuple[float, float]:
    """Median per-step seconds for full vs compressed single-query decode.

    One step attends one query row over every head.
    """
    full = [(np.ascontiguousarray(h.keys, dtype=np.float64), np.ascontiguousarray(h.values, dtype=np.float64)) for h in mh.heads]
    for cc in compressed:
        cc.keys64, cc.values64, cc.log_weights  # materialise cached float64 views
    rows = [q[None, :] for q in np.asarray(queries, dtype=np.float64)]

    def run_full():
        for q in rows:
            for k, v in full:
                standard_attention(q, k, v)

    def run_compressed():
        for q in rows:
            for cc in compressed:
                proportional_attention(q, cc)

    q = len(rows)
    return median_time(run_full, repeats) / q, median_time(run_compressed, repeats) / q


def run_bench(
    spec: SyntheticSpec,
    tau_grid: Sequence[float],
    queries: int = 16,
    repeats: int = 5,
    *,
    seeds: int = 1,
    chunking: Chunking = "semantic",
    max_workers: int | None = None,
) -> list[BenchRow]:
    """Sweep ``tau_grid`` on synthetic caches.

    Retention is averaged over ``seeds`` consecutive rng seeds starting at
    ``spec.rng_seed``; timings are taken on the first seed only.
    """
    if queries < 1:
        raise ValueError("queries must be >= 1")
    caches = [generate(spec.with_seed(spec.rng_seed + i)) for i in range(seeds)]
    qrng = np.random.default_rng([spec.rng_seed, 0x5143])
    qs = qrng.standard_normal((queries, spec.d))
    rows = []
    for tau in tau_grid:
        per_seed = [compress_multi_head(mh, tau, chunking, max_workers=max_workers) for mh in caches]
        kept = float(np.mean([retained_fraction(c) for c in per_seed]))
        with threadpool_limits(limits=1):
            t_full, t_comp = decode_timings(caches[0], per_seed[0], qs, repeats)
        rows.append(
            BenchRow(
                tau=float(tau),
                retained_fraction=kept,
                removed_fraction_pct=100.0 * (1.0 - kept),
                attention_time_full=t_full,
                attention_time_compressed=t_comp,
                speedup=t_full / t_comp,
            )
        )
    return rows


def bench_metadata(spec: SyntheticSpec, chunking: Chunking, max_workers: int | None, seeds: int) -> dict:
    return {
        **{f"spec.{k}": v for k, v in spec.to_dict().items()},
        "chunking": str(chunking),
        "seeds": seeds,
        "compression_workers": max_workers or 1,
        "timing_workers": 1,
        "timer": "perf_counter median, 1 warm-up",
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def write_csv(rows: Sequence[BenchRow], path: str | Path, metadata: dict | None = None) -> None:
    """Write ``rows`` with a header; metadata goes in leading ``#`` comment lines."""
    with open(path, "w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(r).items()})


def read_csv(path: str | Path) -> list[BenchRow]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [BenchRow(**{k: float(v) for k, v in rec.items()}) for rec in csv.DictReader(lines)]
