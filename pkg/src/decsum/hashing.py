"""Seeded pairwise-independent hashing over prime fields.

Every hash here is a degree-1 polynomial ``(a*x + b) mod P``.  Arithmetic is
vectorized over numpy ``uint64`` arrays; products in the 61-bit field are
formed from 31/30-bit halves so nothing overflows.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MERSENNE_61 = (1 << 61) - 1
MERSENNE_31 = (1 << 31) - 1
SEED_VERSION = 1

_U = np.uint64
_M30 = _U((1 << 30) - 1)
_M31 = _U((1 << 31) - 1)
_P61 = _U(MERSENNE_61)


def substream_rng(root_seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for a named purpose under one root seed."""
    ss = np.random.SeedSequence(entropy=int(root_seed) & ((1 << 64) - 1),
                                spawn_key=(zlib.crc32(purpose.encode()),))
    return np.random.default_rng(ss)


def _reduce61(r: np.ndarray) -> np.ndarray:
    r = (r & _P61) + (r >> _U(61))
    r = (r & _P61) + (r >> _U(61))
    return r - np.where(r >= _P61, _P61, _U(0))


def mulmod61(a, b) -> np.ndarray:
    """Elementwise ``a*b mod (2**61 - 1)`` for operands already in the field."""
    a = np.asarray(a, dtype=_U)
    b = np.asarray(b, dtype=_U)
    a_hi, a_lo = a >> _U(31), a & _M31
    b_hi, b_lo = b >> _U(31), b & _M31
    mid = a_hi * b_lo + a_lo * b_hi
    # 2**62 == 2 and 2**61 == 1 modulo the prime
    r = ((a_hi * b_hi) << _U(1)) + (mid >> _U(30)) + ((mid & _M30) << _U(31)) + a_lo * b_lo
    return _reduce61(r)


def mulmod(a, b, modulus: int) -> np.ndarray:
    if modulus == MERSENNE_61:
        return mulmod61(a, b)
    if modulus >= 1 << 32:
        raise ValueError("vectorized arithmetic supports the 61-bit Mersenne prime or moduli < 2**32")
    return (np.asarray(a, dtype=_U) * np.asarray(b, dtype=_U)) % _U(modulus)


def addmod(a, b, modulus: int) -> np.ndarray:
    s = np.asarray(a, dtype=_U) + np.asarray(b, dtype=_U)
    p = _U(modulus)
    return s - np.where(s >= p, p, _U(0))


def to_field(x, modulus: int) -> np.ndarray:
    """Reduce signed integers into [0, modulus)."""
    return (np.asarray(x, dtype=np.int64) % np.int64(modulus)).astype(_U)


def affine(a, b, x, modulus: int) -> np.ndarray:
    return addmod(mulmod(a, x, modulus), b, modulus)


def power_tables(bases, modulus: int, chunks: int = 4) -> np.ndarray:
    """Tables ``T[..., j, c] = base ** (c * 256**j)`` for 8-bit chunked exponents."""
    bases = np.atleast_1d(np.asarray(bases, dtype=_U))
    out = np.empty(bases.shape + (chunks, 256), dtype=_U)
    step = bases.copy()
    for j in range(chunks):
        tab = out[..., j, :]
        tab[..., 0] = 1
        sq = step.copy()
        width = 1
        while width < 256:
            tab[..., width:2 * width] = mulmod(tab[..., :width], sq[..., None], modulus)
            sq = mulmod(sq, sq, modulus)
            width *= 2
        step = sq  # base ** (256 ** (j + 1))
    return out


def chunked_power(tables: np.ndarray, x, modulus: int) -> np.ndarray:
    """``base ** x`` from ``power_tables`` output; x < 2**(8*chunks)."""
    x = np.asarray(x, dtype=_U)
    chunks = tables.shape[-2]
    if x.size and int(x.max()) >> (8 * chunks):
        raise ValueError("exponent too large for the fingerprint tables")
    digits = [((x >> _U(8 * j)) & _U(255)).astype(np.intp) for j in range(chunks)]
    if tables.ndim == 2:
        r = tables[0][digits[0]]
        for j in range(1, chunks):
            r = mulmod(r, tables[j][digits[j]], modulus)
        return r
    # one row of results per base on the leading axis
    k = np.arange(tables.shape[0])[:, None]
    r = tables[k, 0, digits[0]]
    for j in range(1, chunks):
        r = mulmod(r, tables[k, j, digits[j]], modulus)
    return r


@dataclass(frozen=True)
class PairwiseSeed:
    """Field elements for a bundle of pairwise-independent hash functions.

    ``pairs[j] = (a_j, b_j)`` defines ``h_j(x) = a_j x + b_j mod modulus``.
    ``base`` is the evaluation point of the power fingerprint ``base ** x``.
    With ``nested`` set, level membership is the running product of
    half-probability bits, so membership in level i implies every level below.
    """

    pairs: tuple[tuple[int, int], ...]
    base: int = 2
    nested: bool = False
    modulus: int = MERSENNE_61

    @classmethod
    def generate(cls, rng: np.random.Generator, count: int, *, nested: bool = False,
                 modulus: int = MERSENNE_61) -> PairwiseSeed:
        raw = rng.integers(0, modulus, size=(count, 2), dtype=np.int64)
        base = int(rng.integers(2, modulus, dtype=np.int64))
        return cls(tuple((int(a), int(b)) for a, b in raw), base, nested, modulus)

    @cached_property
    def _a(self) -> np.ndarray:
        return np.array([a for a, _ in self.pairs], dtype=_U)

    @cached_property
    def _b(self) -> np.ndarray:
        return np.array([b for _, b in self.pairs], dtype=_U)

    @cached_property
    def _tables(self) -> np.ndarray:
        return power_tables(self.base, self.modulus)[0]

    def hash(self, j: int, x) -> np.ndarray:
        return affine(self._a[j], self._b[j], x, self.modulus)

    def hash_all(self, x) -> np.ndarray:
        """Shape (len(pairs), len(x)) matrix of every hash on every input."""
        x = np.asarray(x, dtype=_U)
        return affine(self._a[:, None], self._b[:, None], x[None, :], self.modulus)

    def fingerprints(self, x) -> np.ndarray:
        return chunked_power(self._tables, x, self.modulus)

    # level membership ------------------------------------------------------

    @property
    def levels(self) -> int:
        """Largest valid level index (levels run 0..len(pairs))."""
        return len(self.pairs)

    def level_mask(self, i: int, x) -> np.ndarray:
        if not 0 <= i <= self.levels:
            raise IndexError(f"level {i} outside [0, {self.levels}]")
        x = np.asarray(x, dtype=_U)
        if i == 0:
            return np.ones(x.shape, dtype=bool)
        if self.nested:
            out = np.ones(x.shape, dtype=bool)
            half = _U(self.modulus >> 1)
            for j in range(i):
                out &= self.hash(j, x) < half
            return out
        return self.hash(i - 1, x) < _U(self.modulus >> i)

    def depth(self, x) -> np.ndarray:
        """Number of levels above 0 an item belongs to (nested seeds only)."""
        if not self.nested:
            raise ValueError("depth is only defined for nested seeds")
        x = np.asarray(x, dtype=_U)
        out = np.zeros(x.shape, dtype=np.int64)
        alive = np.ones(x.shape, dtype=bool)
        half = _U(self.modulus >> 1)
        for j in range(self.levels):
            alive &= self.hash(j, x) < half
            out += alive
        return out

    def memberships(self, x) -> np.ndarray:
        """Boolean (levels + 1, len(x)) matrix of X_{i,d}."""
        x = np.asarray(x, dtype=_U)
        out = np.ones((self.levels + 1,) + x.shape, dtype=bool)
        if self.nested:
            half = _U(self.modulus >> 1)
            for j in range(self.levels):
                out[j + 1] = out[j] & (self.hash(j, x) < half)
        else:
            h = self.hash_all(x)
            thr = np.array([self.modulus >> i for i in range(1, self.levels + 1)], dtype=_U)
            out[1:] = h < thr[:, None]
        return out

    # serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = struct.pack(">BQBQI", SEED_VERSION, self.modulus, int(self.nested),
                           self.base, len(self.pairs))
        body = np.array(self.pairs, dtype=">u8").reshape(-1).tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple[PairwiseSeed, int]:
        version, modulus, nested, base, count = struct.unpack_from(">BQBQI", data, offset)
        if version != SEED_VERSION:
            raise ValueError(f"unsupported seed version {version}")
        offset += struct.calcsize(">BQBQI")
        flat = np.frombuffer(data, dtype=">u8", count=2 * count, offset=offset)
        pairs = tuple((int(flat[2 * j]), int(flat[2 * j + 1])) for j in range(count))
        return cls(pairs, base, bool(nested), modulus), offset + 16 * count


def level_bit(seed: PairwiseSeed, i: int, d: int) -> int:
    """X_{i,d}: 1 when item d is sampled into level i."""
    return int(seed.level_mask(i, np.array([d]))[0])


def bucket_hash(seed: PairwiseSeed, row: int, d: int, width: int) -> int:
    return int(seed.hash(row, np.array([d]))[0] % np.uint64(width))


def fingerprint(seed: PairwiseSeed, d: int) -> int:
    return int(seed.fingerprints(np.array([d]))[0])
