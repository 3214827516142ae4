"""Parameter sweeps: success rate, relative error, allocated counters, wall time."""

from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import FunctionSpec, accumulate, exact_sum
from .estimate import build_s, estimate
from .hashing import substream_rng
from .sketch import ExtractionFailed, new_sketch
from .workloads import generate

COLUMNS = ["model", "generator", "p", "eps", "m", "n", "s", "seed", "success", "estimate",
           "exact", "rel_error", "within_eps", "counters", "peak_level_counters",
           "level_limit", "wall_time"]


@dataclass(frozen=True)
class BenchCell:
    model: str
    generator: str
    p: float
    eps: float
    m: int
    n: int
    seed: int
    s: int | None = None
    k: int | None = None
    alpha: float = 1.1


def sketch_stream(model: str, n: int, s: int, seed: int, updates, **kw):
    sk = new_sketch(model, n, s, seed, **kw)
    if updates:
        arr = np.asarray(updates, dtype=np.int64)
        sk.update_many(arr[:, 0], arr[:, 1])
    return sk


def run_cell(cell: BenchCell) -> dict:
    g = FunctionSpec.power(cell.p)
    rng = substream_rng(cell.seed, f"bench-stream:{cell.generator}")
    updates = generate(cell.generator, rng, cell.n, cell.m, cell.model, k=cell.k,
                       alpha=cell.alpha, g=g, eps=cell.eps)
    truth = exact_sum(accumulate(updates), g)
    s = cell.s if cell.s is not None else build_s(g, cell.eps, cell.m, cell.n)
    start = time.perf_counter()
    sk = sketch_stream(cell.model, cell.n, s, cell.seed, updates)
    try:
        value = estimate(sk.extract(), g).value
        success = True
    except ExtractionFailed:
        value, success = float("nan"), False
    wall = time.perf_counter() - start
    rel = abs(value - truth) / truth if success and truth > 0 else (0.0 if success else float("nan"))
    peak = max(getattr(sk, "peak", [0]))
    return {
        "model": cell.model, "generator": cell.generator, "p": cell.p, "eps": cell.eps,
        "m": cell.m, "n": cell.n, "s": s, "seed": cell.seed, "success": int(success),
        "estimate": value, "exact": truth, "rel_error": rel,
        "within_eps": int(success and rel <= cell.eps), "counters": sk.counters,
        "peak_level_counters": peak, "level_limit": getattr(sk, "limit", ""),
        "wall_time": round(wall, 6),
    }


def sweep(models, generators, ps, epss, ms, ns, seeds, *, s: int | None = None,
          k: int | None = None, workers: int = 1) -> list[dict]:
    cells = [BenchCell(model, gen, p, eps, m, n, seed, s, k)
             for model, gen, p, eps, m, n, seed
             in itertools.product(models, generators, ps, epss, ms, ns, seeds)
             if not (gen == "cancel-heavy" and model == "insertion")]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
