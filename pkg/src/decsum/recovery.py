"""Linear sketches for turnstile streams: exact s-sparse recovery and L0.

Both structures are linear in the frequency vector, so states built under the
same seed add bucketwise and an insert followed by a matching delete restores
the prior state exactly.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .hashing import (
    MERSENNE_31,
    MERSENNE_61,
    PairwiseSeed,
    addmod,
    chunked_power,
    mulmod,
    mulmod61,
    power_tables,
    to_field,
)

STATE_VERSION = 1
_U = np.uint64
_P = MERSENNE_61


class RecoveryFailed(RuntimeError):
    """Decoding could not certify the full support."""


def _scatter_mod(target: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    # field values are < 2**61; summing 31-bit halves keeps uint64 accumulators exact
    if idx.size == 0:
        return
    hi = np.zeros(target.size, dtype=_U)
    lo = np.zeros(target.size, dtype=_U)
    np.add.at(hi, idx, vals >> _U(31))
    np.add.at(lo, idx, vals & _U(MERSENNE_31))
    add = addmod(mulmod61(hi % _U(_P), _U(1 << 31)), lo % _U(_P), _P)
    flat = target.reshape(-1)
    flat[:] = addmod(flat, add, _P)


class SparseRecovery:
    """Recover every nonzero frequency when the support has at most ``capacity`` items.

    Each of ``rows`` rows hashes items into ``width = 2 * capacity`` buckets that
    hold the count sum, the id sum and a power-fingerprint sum.  Decoding peels
    verified 1-sparse buckets until a fixpoint and fails unless everything is
    accounted for.
    """

    def __init__(self, capacity: int, delta: float, n: int, seed: PairwiseSeed | None = None,
                 rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if n >= 1 << 30:
            raise ValueError("item universe limited to n < 2**30")
        self.capacity = int(capacity)
        self.delta = float(delta)
        self.n = int(n)
        self.width = 2 * self.capacity
        self.rows = math.ceil(math.log2(self.capacity / self.delta)) + 1
        if seed is None:
            seed = PairwiseSeed.generate(rng if rng is not None else np.random.default_rng(),
                                         self.rows)
        if len(seed.pairs) != self.rows or seed.modulus != _P:
            raise ValueError("seed does not match the recovery shape")
        self.seed = seed
        self.counts = np.zeros((self.rows, self.width), dtype=np.int64)
        self.idsums = np.zeros((self.rows, self.width), dtype=np.int64)
        self.keyed = np.zeros((self.rows, self.width), dtype=_U)
        self.updates = 0

    # updates ---------------------------------------------------------------

    def _flat_index(self, items: np.ndarray) -> np.ndarray:
        h = self.seed.hash_all(items) % _U(self.width)
        return (h.astype(np.int64) + (np.arange(self.rows) * self.width)[:, None]).reshape(-1)

    def _apply(self, counts, idsums, keyed, items, deltas) -> None:
        idx = self._flat_index(items)
        d = np.broadcast_to(deltas, (self.rows, items.size)).reshape(-1)
        np.add.at(counts.reshape(-1), idx, d)
        np.add.at(idsums.reshape(-1), idx, np.repeat((deltas * items)[None, :], self.rows, 0).reshape(-1))
        vals = mulmod61(to_field(deltas, _P), self.seed.fingerprints(items))
        _scatter_mod(keyed, idx, np.repeat(vals[None, :], self.rows, 0).reshape(-1))

    def update(self, d: int, delta: int) -> None:
        self.update_many(np.array([d]), np.array([delta]))

    def update_many(self, items, deltas) -> None:
        items = np.asarray(items, dtype=np.int64)
        deltas = np.broadcast_to(np.asarray(deltas, dtype=np.int64), items.shape)
        if items.size == 0:
            return
        if items.min() < 1 or items.max() > self.n:
            raise ValueError(f"items must lie in [1, {self.n}]")
        # linear state: pre-aggregating equal items gives the identical result
        uniq, inv = np.unique(items, return_inverse=True)
        agg = np.zeros(uniq.size, dtype=np.int64)
        np.add.at(agg, inv, deltas)
        self._ingest(uniq, agg, int(items.size))

    def _ingest(self, items: np.ndarray, totals: np.ndarray, raw_updates: int) -> None:
        self.updates += raw_updates
        keep = totals != 0
        if keep.any():
            self._apply(self.counts, self.idsums, self.keyed, items[keep], totals[keep])

    # decoding --------------------------------------------------------------

    def recover(self) -> dict[int, int]:
        """All nonzero frequencies, or ``RecoveryFailed``."""
        counts, idsums, keyed = self.counts.copy(), self.idsums.copy(), self.keyed.copy()
        found: dict[int, int] = {}
        while True:
            r, w = np.nonzero(counts)
            if r.size == 0:
                break
            c = counts[r, w]
            s = idsums[r, w]
            ok = s % c == 0
            ids = np.where(ok, s // np.where(ok, c, 1), 0)
            ok &= (ids >= 1) & (ids <= self.n)
            if not ok.any():
                break
            r, w, c, ids = r[ok], w[ok], c[ok], ids[ok]
            expect = mulmod61(to_field(c, _P), self.seed.fingerprints(ids))
            ok = keyed[r, w] == expect
            if not ok.any():
                break
            ids, c = ids[ok], c[ok]
            uniq, first = np.unique(ids, return_index=True)
            vals = c[first]
            # the same item seen pure in several rows must agree everywhere
            if not np.array_equal(c, vals[np.searchsorted(uniq, ids)]):
                raise RecoveryFailed("inconsistent 1-sparse buckets")
            for d, v in zip(uniq.tolist(), vals.tolist()):
                found[d] = found.get(d, 0) + v
            self._apply(counts, idsums, keyed, uniq, -vals)
        if counts.any() or idsums.any() or keyed.any():
            raise RecoveryFailed("residual mass after peeling")
        return {d: v for d, v in sorted(found.items()) if v != 0}

    # algebra ---------------------------------------------------------------

    def compatible(self, other: SparseRecovery) -> bool:
        return (self.capacity, self.delta, self.n, self.seed) == (
            other.capacity, other.delta, other.n, other.seed)

    def __iadd__(self, other: SparseRecovery) -> SparseRecovery:
        if not self.compatible(other):
            raise ValueError("cannot merge recovery states with different parameters or seeds")
        self.counts += other.counts
        self.idsums += other.idsums
        self.keyed = addmod(self.keyed, other.keyed, _P)
        self.updates += other.updates
        return self

    def state_equal(self, other: SparseRecovery) -> bool:
        return (self.compatible(other) and np.array_equal(self.counts, other.counts)
                and np.array_equal(self.idsums, other.idsums)
                and np.array_equal(self.keyed, other.keyed))

    def is_zero(self) -> bool:
        return not (self.counts.any() or self.idsums.any() or self.keyed.any())

    @property
    def counters(self) -> int:
        return 3 * self.rows * self.width

    # serialization ---------------------------------------------------------

    _HEAD = ">BQdQIIQ"

    def to_bytes(self) -> bytes:
        head = struct.pack(self._HEAD, STATE_VERSION, self.capacity, self.delta, self.n,
                           self.rows, self.width, self.updates)
        body = np.stack([self.counts, self.idsums, self.keyed.astype(np.int64)], axis=-1)
        return head + self.seed.to_bytes() + body.astype(">i8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple[SparseRecovery, int]:
        version, cap, delta, n, rows, width, updates = struct.unpack_from(cls._HEAD, data, offset)
        if version != STATE_VERSION:
            raise ValueError(f"unsupported recovery state version {version}")
        offset += struct.calcsize(cls._HEAD)
        seed, offset = PairwiseSeed.from_bytes(data, offset)
        st = cls(cap, delta, n, seed=seed)
        if (st.rows, st.width) != (rows, width):
            raise ValueError("corrupt recovery header")
        size = rows * width * 3
        body = np.frombuffer(data, dtype=">i8", count=size, offset=offset).reshape(rows, width, 3)
        st.counts = body[..., 0].astype(np.int64)
        st.idsums = body[..., 1].astype(np.int64)
        st.keyed = body[..., 2].astype(_U)
        st.updates = updates
        return st, offset + 8 * size


class L0Estimator:
    """Median of ``reps`` level-sampled bin-occupancy estimates of |supp(f)|.

    In repetition k an item reaches level j with probability 2**-j (nested).
    Level j of a repetition is an array of ``bins`` fingerprint sums; the number
    of nonzero bins at the first level with load at most one half is inverted
    through the balls-into-bins occupancy formula and scaled by 2**j.
    Cancelled items leave every bin exactly as before, so deletions are handled.
    """

    P = MERSENNE_31

    def __init__(self, n: int, reps: int = 36, bins: int = 512,
                 rng: np.random.Generator | None = None, params: np.ndarray | None = None):
        self.n = int(n)
        self.reps = int(reps)
        self.bins = int(bins)
        self.levels = max(1, math.ceil(math.log2(max(self.n, 2)))) + 2
        if params is None:
            rng = rng if rng is not None else np.random.default_rng()
            params = rng.integers(0, self.P, size=(5, self.reps), dtype=np.int64)
            params[4] = rng.integers(2, self.P, size=self.reps, dtype=np.int64)
        self.params = np.asarray(params, dtype=np.int64).reshape(5, self.reps)
        la, lb, ba, bb, base = self.params.astype(_U)
        self._level = (la[:, None], lb[:, None])
        self._bin = (ba[:, None], bb[:, None])
        self._tables = power_tables(base, self.P)
        # item reaches level j >= 1 iff its level hash < P >> j
        self._thresholds = np.array([self.P >> j for j in range(self.levels - 1, 0, -1)], dtype=_U)
        self.table = np.zeros((self.reps, self.levels, self.bins), dtype=_U)

    def update(self, d: int, delta: int) -> None:
        self.update_many(np.array([d]), np.array([delta]))

    def update_many(self, items, deltas) -> None:
        items = np.asarray(items, dtype=np.int64)
        deltas = np.broadcast_to(np.asarray(deltas, dtype=np.int64), items.shape)
        if items.size == 0:
            return
        x = items.astype(_U)[None, :]
        P = _U(self.P)
        u = (self._level[0] * x + self._level[1]) % P
        depth = self._thresholds.size - np.searchsorted(self._thresholds, u.reshape(-1), side="right")
        b = ((self._bin[0] * x + self._bin[1]) % P % _U(self.bins)).astype(np.int64).reshape(-1)
        val = (to_field(deltas, self.P)[None, :] * chunked_power(self._tables, items, self.P)) % P
        val = val.reshape(-1)
        cnt = depth + 1
        k = np.repeat(np.arange(self.reps), items.size)
        base = k * (self.levels * self.bins) + b
        starts = np.cumsum(cnt) - cnt
        lev = np.arange(int(cnt.sum())) - np.repeat(starts, cnt)
        idx = np.repeat(base, cnt) + lev * self.bins
        flat = self.table.reshape(-1)
        np.add.at(flat, idx, np.repeat(val, cnt))
        flat %= P

    def estimate(self) -> float:
        occupied = np.count_nonzero(self.table, axis=2)  # (reps, levels)
        light = occupied <= self.bins // 2
        j = np.where(light.any(axis=1), light.argmax(axis=1), self.levels - 1)
        t = occupied[np.arange(self.reps), j].astype(np.float64)
        t = np.minimum(t, self.bins - 1)
        est = np.ldexp(np.log1p(-t / self.bins) / np.log1p(-1.0 / self.bins), j)
        return float(np.median(est))

    def compatible(self, other: L0Estimator) -> bool:
        return (self.n, self.reps, self.bins) == (other.n, other.reps, other.bins) and \
            np.array_equal(self.params, other.params)

    def __iadd__(self, other: L0Estimator) -> L0Estimator:
        if not self.compatible(other):
            raise ValueError("cannot merge L0 states with different parameters or seeds")
        self.table = (self.table + other.table) % _U(self.P)
        return self

    def state_equal(self, other: L0Estimator) -> bool:
        return self.compatible(other) and np.array_equal(self.table, other.table)

    @property
    def counters(self) -> int:
        return self.table.size

    _HEAD = ">BQII"

    def to_bytes(self) -> bytes:
        head = struct.pack(self._HEAD, STATE_VERSION, self.n, self.reps, self.bins)
        return head + self.params.astype(">u8").tobytes() + self.table.astype(">u4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple[L0Estimator, int]:
        version, n, reps, bins = struct.unpack_from(cls._HEAD, data, offset)
        if version != STATE_VERSION:
            raise ValueError(f"unsupported L0 state version {version}")
        offset += struct.calcsize(cls._HEAD)
        params = np.frombuffer(data, dtype=">u8", count=5 * reps, offset=offset).reshape(5, reps)
        offset += 8 * 5 * reps
        st = cls(n, reps, bins, params=params.astype(np.int64))
        size = st.table.size
        st.table = np.frombuffer(data, dtype=">u4", count=size, offset=offset).astype(_U).reshape(st.table.shape)
        return st, offset + 4 * size
