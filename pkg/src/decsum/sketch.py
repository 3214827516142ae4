"""Universal samples of supp(f): a turnstile sketch and an insertion-only sketch.

Both keep nested-probability substreams of the input at levels 0..ell, where
an item reaches level i with probability 2**-i, and extract the exact
frequencies of one level together with its sampling probability q = 2**-i.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .hashing import PairwiseSeed, substream_rng
from .recovery import L0Estimator, RecoveryFailed, SparseRecovery

MAGIC = b"DSUM"
FORMAT_VERSION = 1
RECOVERY_FACTOR = 96
RECOVERY_DELTA = 1 / 48
SELECT_FACTOR = 18
DEATH_FACTOR = 12


class ExtractionFailed(RuntimeError):
    pass


@dataclass
class Sample:
    """Exact frequencies of a pairwise-independent sample of supp(f).

    Each support item is present in ``W`` with probability ``q``.
    """

    W: dict[int, int]
    q: float
    level: int = 0
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.W)

    def to_json(self) -> dict:
        return {"q": self.q, "level": self.level, "seed": self.seed, "size": len(self.W),
                "W": {str(d): v for d, v in sorted(self.W.items())}}


def num_levels(n: int, s: int) -> int:
    """ell = ceil(lg(n/s)) computed in integers."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    ell = 0
    while s << ell < n:
        ell += 1
    return ell


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _aggregate(items, deltas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    items = np.asarray(items, dtype=np.int64)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=np.int64), items.shape)
    uniq, inv, mult = np.unique(items, return_inverse=True, return_counts=True)
    agg = np.zeros(uniq.size, dtype=np.int64)
    np.add.at(agg, inv, deltas)
    return uniq, agg, mult


class TurnstileSketch:
    """Level-sampled sparse recovery plus an L0 estimate to pick the level.

    Level i keeps a recovery structure of capacity ``min(96 s, n)`` for the
    substream of items with X_{i,d} = 1; levels use independent hashes.
    """

    model = "turnstile"

    def __init__(self, n: int, s: int, seed: int, *, l0_reps: int = 36, l0_bins: int = 512,
                 meta: dict | None = None, _empty: bool = False):
        self.n = int(n)
        self.s = int(s)
        self.seed = _check_seed(seed)
        self.ell = num_levels(self.n, self.s)
        self.capacity = min(RECOVERY_FACTOR * self.s, self.n)
        self.meta = dict(meta or {})
        if _empty:
            return
        self.sampler = PairwiseSeed.generate(substream_rng(self.seed, "levels"), self.ell)
        self.levels = [
            SparseRecovery(self.capacity, RECOVERY_DELTA, self.n,
                           rng=substream_rng(self.seed, f"recovery:{i}"))
            for i in range(self.ell + 1)
        ]
        self.l0 = L0Estimator(self.n, l0_reps, l0_bins, rng=substream_rng(self.seed, "l0"))

    def update(self, d: int, delta: int = 1) -> None:
        self.update_many([d], [delta])

    def update_many(self, items, deltas) -> None:
        items = np.asarray(items, dtype=np.int64)
        if items.size == 0:
            return
        if items.min() < 1 or items.max() > self.n:
            raise ValueError(f"items must lie in [1, {self.n}]")
        self.l0.update_many(items, deltas)
        uniq, agg, mult = _aggregate(items, deltas)
        member = self.sampler.memberships(uniq)
        for i, st in enumerate(self.levels):
            sel = member[i]
            if sel.any():
                st._ingest(uniq[sel], agg[sel], int(mult[sel].sum()))

    def select_level(self) -> tuple[int, float]:
        L = self.l0.estimate()
        if L <= 0:
            return 0, L
        i = max(0, math.floor(math.log2(L / (SELECT_FACTOR * self.s))))
        return min(i, self.ell), L

    def extract(self) -> Sample:
        level, _ = self.select_level()
        try:
            W = self.levels[level].recover()
        except RecoveryFailed as exc:
            raise ExtractionFailed(f"sparse recovery failed at level {level}: {exc}") from exc
        return Sample(W, 2.0 ** -level, level, self.seed)

    def compatible(self, other: TurnstileSketch) -> bool:
        return (isinstance(other, TurnstileSketch)
                and (self.n, self.s, self.seed) == (other.n, other.s, other.seed)
                and self.sampler == other.sampler and self.l0.compatible(other.l0)
                and all(a.compatible(b) for a, b in zip(self.levels, other.levels)))

    def merge(self, other: TurnstileSketch) -> TurnstileSketch:
        """Sketch of the concatenated streams; neither operand is modified."""
        if not self.compatible(other):
            raise ValueError("sketches differ in parameters or seeds")
        out = TurnstileSketch.from_bytes(self.to_bytes())
        for a, b in zip(out.levels, other.levels):
            a += b
        out.l0 += other.l0
        return out

    def state_equal(self, other: TurnstileSketch) -> bool:
        return (self.compatible(other) and self.l0.state_equal(other.l0)
                and all(a.state_equal(b) for a, b in zip(self.levels, other.levels)))

    @property
    def counters(self) -> int:
        return sum(st.counters for st in self.levels) + self.l0.counters

    def to_bytes(self) -> bytes:
        out = [_header(self, self.capacity), self.sampler.to_bytes()]
        out.extend(st.to_bytes() for st in self.levels)
        out.append(self.l0.to_bytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> TurnstileSketch:
        sk = load_sketch(data)
        if not isinstance(sk, cls):
            raise ValueError("not a turnstile sketch")
        return sk


class InsertionSketch:
    """Exact counters per level; a level dies once it would exceed 12 t counters.

    Levels use nested membership, so the smallest alive level gives the largest
    sampling probability whose support still fits in memory.
    """

    model = "insertion"

    def __init__(self, n: int, s: int, seed: int, *, meta: dict | None = None,
                 _empty: bool = False):
        self.n = int(n)
        self.s = int(s)
        self.seed = _check_seed(seed)
        self.ell = num_levels(self.n, self.s)
        self.t = max(RECOVERY_FACTOR * self.s, self.ell)
        self.limit = DEATH_FACTOR * self.t
        self.meta = dict(meta or {})
        self.peak = [0] * (self.ell + 1)
        if _empty:
            return
        self.sampler = PairwiseSeed.generate(substream_rng(self.seed, "nested-levels"),
                                             self.ell, nested=True)
        self.counters_by_level: list[dict[int, int] | None] = [{} for _ in range(self.ell + 1)]

    def update(self, d: int, delta: int = 1) -> None:
        self.update_many([d], [delta])

    def update_many(self, items, deltas=1) -> None:
        items = np.asarray(items, dtype=np.int64)
        if items.size == 0:
            return
        deltas = np.broadcast_to(np.asarray(deltas, dtype=np.int64), items.shape)
        if np.any(deltas != 1):
            raise ValueError("insertion-only sketch accepts delta = +1 only")
        if items.min() < 1 or items.max() > self.n:
            raise ValueError(f"items must lie in [1, {self.n}]")
        uniq, agg, _ = _aggregate(items, deltas)
        member = self.sampler.memberships(uniq)
        for i, counters in enumerate(self.counters_by_level):
            if counters is None:
                continue
            sel = member[i]
            keys = uniq[sel].tolist()
            adds = agg[sel].tolist()
            new = sum(1 for d in keys if d not in counters)
            # distinct counts only grow, so crossing the limit at any point in
            # this batch is the same as crossing it at its end
            if len(counters) + new > self.limit:
                # one update at a time, the level would have filled to the limit first
                self.counters_by_level[i] = None
                self.peak[i] = self.limit
                continue
            for d, a in zip(keys, adds):
                counters[d] = counters.get(d, 0) + a
            self.peak[i] = max(self.peak[i], len(counters))

    def alive(self) -> list[bool]:
        return [c is not None for c in self.counters_by_level]

    def extract(self) -> Sample:
        for i, counters in enumerate(self.counters_by_level):
            if counters is not None:
                return Sample(dict(sorted(counters.items())), 2.0 ** -i, i, self.seed)
        raise ExtractionFailed("every level exceeded its counter limit")

    def compatible(self, other: InsertionSketch) -> bool:
        return (isinstance(other, InsertionSketch)
                and (self.n, self.s, self.seed) == (other.n, other.s, other.seed)
                and self.sampler == other.sampler)

    def merge(self, other: InsertionSketch) -> InsertionSketch:
        if not self.compatible(other):
            raise ValueError("sketches differ in parameters or seeds")
        out = InsertionSketch.from_bytes(self.to_bytes())
        for i, (a, b) in enumerate(zip(out.counters_by_level, other.counters_by_level)):
            if a is None or b is None:
                out.counters_by_level[i] = None
                out.peak[i] = out.limit
                continue
            merged = dict(a)
            for d, v in b.items():
                merged[d] = merged.get(d, 0) + v
            if len(merged) > out.limit:
                out.counters_by_level[i] = None
                out.peak[i] = out.limit
            else:
                out.counters_by_level[i] = merged
                out.peak[i] = max(out.peak[i], other.peak[i], len(merged))
        return out

    def state_equal(self, other: InsertionSketch) -> bool:
        return self.compatible(other) and self.counters_by_level == other.counters_by_level

    @property
    def counters(self) -> int:
        return sum(len(c) for c in self.counters_by_level if c is not None)

    def to_bytes(self) -> bytes:
        out = [_header(self, self.t), self.sampler.to_bytes()]
        for i, counters in enumerate(self.counters_by_level):
            if counters is None:
                out.append(struct.pack(">BQQ", 0, self.peak[i], 0))
                continue
            out.append(struct.pack(">BQQ", 1, self.peak[i], len(counters)))
            if counters:
                pairs = np.array(sorted(counters.items()), dtype=np.int64)
                out.append(pairs.astype(">i8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> InsertionSketch:
        sk = load_sketch(data)
        if not isinstance(sk, cls):
            raise ValueError("not an insertion-only sketch")
        return sk


# file format ----------------------------------------------------------------

_HEAD = ">4sBcQQIQQI"


def _header(sk, t: int) -> bytes:
    meta = json.dumps(sk.meta, sort_keys=True, separators=(",", ":")).encode()
    model = b"T" if sk.model == "turnstile" else b"I"
    return struct.pack(_HEAD, MAGIC, FORMAT_VERSION, model, sk.n, sk.s, sk.ell, t,
                       sk.seed, len(meta)) + meta


def load_sketch(data: bytes) -> TurnstileSketch | InsertionSketch:
    magic, version, model, n, s, ell, t, seed, meta_len = struct.unpack_from(_HEAD, data, 0)
    if magic != MAGIC:
        raise ValueError("not a sketch file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported sketch format version {version}")
    offset = struct.calcsize(_HEAD)
    meta = json.loads(data[offset:offset + meta_len]) if meta_len else {}
    offset += meta_len
    if model == b"T":
        sk = TurnstileSketch(n, s, seed, meta=meta, _empty=True)
        sk.sampler, offset = PairwiseSeed.from_bytes(data, offset)
        sk.levels = []
        for _ in range(ell + 1):
            st, offset = SparseRecovery.from_bytes(data, offset)
            sk.levels.append(st)
        sk.l0, offset = L0Estimator.from_bytes(data, offset)
    elif model == b"I":
        sk = InsertionSketch(n, s, seed, meta=meta, _empty=True)
        sk.sampler, offset = PairwiseSeed.from_bytes(data, offset)
        sk.counters_by_level = []
        for i in range(ell + 1):
            alive, peak, size = struct.unpack_from(">BQQ", data, offset)
            offset += struct.calcsize(">BQQ")
            sk.peak[i] = peak
            if not alive:
                sk.counters_by_level.append(None)
                continue
            pairs = np.frombuffer(data, dtype=">i8", count=2 * size, offset=offset).reshape(size, 2)
            offset += 16 * size
            sk.counters_by_level.append({int(d): int(v) for d, v in pairs})
    else:
        raise ValueError(f"unknown sketch model {model!r}")
    if sk.ell != ell or offset != len(data):
        raise ValueError("corrupt sketch file")
    return sk


def new_sketch(model: str, n: int, s: int, seed: int, **kw) -> TurnstileSketch | InsertionSketch:
    if model in ("turnstile", "t"):
        return TurnstileSketch(n, s, seed, **kw)
    if model in ("insertion", "insert", "i"):
        kw.pop("l0_reps", None)
        kw.pop("l0_bins", None)
        return InsertionSketch(n, s, seed, **kw)
    raise ValueError(f"unknown model {model!r}")
