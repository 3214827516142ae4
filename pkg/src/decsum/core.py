"""Stream model, decreasing functions and the exact reference oracle."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np


class DomainError(ValueError):
    """A decreasing function was evaluated outside the range it defines."""


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionSpec:
    """An admissible decreasing function g with g(0) = 0 and g(-x) = g(x).

    Use the ``power``, ``constant`` and ``table`` constructors.  Tables hold
    g(1), ..., g(K) followed by an optional constant tail for x > K.
    """

    kind: str
    p: float = 0.0
    c: float = 0.0
    values: tuple[float, ...] = ()
    tail: float | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.kind == "power":
            if not (self.p < 0 and math.isfinite(self.p)):
                raise ValueError(f"power kind needs a finite p < 0, got {self.p}")
        elif self.kind == "constant":
            if not (self.c > 0 and math.isfinite(self.c)):
                raise ValueError(f"constant kind needs c > 0, got {self.c}")
        elif self.kind == "table":
            vals = self.values
            if not vals:
                raise ValueError("table kind needs at least g(1)")
            if any(not (v > 0 and math.isfinite(v)) for v in vals):
                raise ValueError("table values must be positive reals")
            if any(b > a for a, b in zip(vals, vals[1:])):
                raise ValueError("table values must be nonincreasing")
            if self.tail is not None and not (0 <= self.tail <= vals[-1]):
                raise ValueError("tail must lie in [0, last table value]")
        else:
            raise ValueError(f"unknown function kind {self.kind!r}")

    @classmethod
    def power(cls, p: float) -> FunctionSpec:
        return cls("power", p=float(p), label=f"fp:{p:g}")

    @classmethod
    def constant(cls, c: float = 1.0) -> FunctionSpec:
        return cls("constant", c=float(c), label=f"const:{c:g}")

    @classmethod
    def table(cls, values: Sequence[float], tail: float | None = None,
              label: str = "") -> FunctionSpec:
        vals = tuple(float(v) for v in values)
        return cls("table", values=vals, tail=None if tail is None else float(tail),
                   label=label or "table:" + ",".join(f"{v:g}" for v in vals)
                   + ("" if tail is None else f";tail={tail:g}"))

    def __str__(self) -> str:
        return self.label or self.kind

    def __call__(self, x: int) -> float:
        return evaluate_g(self, x)

    def many(self, xs) -> np.ndarray:
        """Vectorized g over an integer array (absolute value taken first)."""
        a = np.abs(np.asarray(xs, dtype=np.int64))
        out = np.zeros(a.shape, dtype=np.float64)
        nz = a != 0
        if self.kind == "power":
            out[nz] = np.power(a[nz].astype(np.float64), self.p)
        elif self.kind == "constant":
            out[nz] = self.c
        else:
            k = len(self.values)
            if self.tail is None and np.any(a > k):
                raise DomainError(f"table defined up to {k} and has no tail")
            table = np.array((0.0,) + self.values + (self.tail or 0.0,))
            out = table[np.minimum(a, k + 1)]
        return out

    def is_convex(self, upto: int) -> bool:
        """Discrete convexity of g on {1, ..., upto}."""
        if self.kind in ("power", "constant"):
            return True
        g = self.many(np.arange(1, upto + 1))
        return bool(np.all(np.diff(g, 2) >= -1e-15 * g[0]))


def evaluate_g(spec: FunctionSpec, x: int) -> float:
    a = abs(int(x))
    if a == 0:
        return 0.0
    if spec.kind == "power":
        return float(np.power(np.float64(a), spec.p))
    if spec.kind == "constant":
        return spec.c
    if a <= len(spec.values):
        return spec.values[a - 1]
    if spec.tail is None:
        raise DomainError(f"table defined up to {len(spec.values)} and has no tail")
    return spec.tail


def parse_function(text: str) -> FunctionSpec:
    """Parse ``fp:<p>``, ``const:<c>`` or ``table:<path>``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "fp":
        return FunctionSpec.power(float(arg))
    if kind == "const":
        return FunctionSpec.constant(float(arg) if arg else 1.0)
    if kind == "table":
        values, tail = read_table(Path(arg))
        return FunctionSpec.table(values, tail, label=text)
    raise ValueError(f"cannot parse function spec {text!r}")


def read_table(path: Path) -> tuple[list[float], float | None]:
    values: list[float] = []
    tail = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("tail="):
            tail = float(line[5:])
        else:
            values.append(float(line))
    return values, tail


class StreamUpdate(NamedTuple):
    item: int
    delta: int = 1


@dataclass(frozen=True)
class StreamParams:
    n: int
    m: int
    M: int | None = None
    model: str = "turnstile"
    epsilon: float = 0.5
    allow_m_below_n: bool = False

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.m < self.n and not self.allow_m_below_n:
            raise ValueError(f"m={self.m} < n={self.n}; pass allow_m_below_n to override")
        if self.M is not None and self.M < self.n:
            raise ValueError("M must be at least n")
        if self.model not in ("turnstile", "insertion"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in (0, 1/2]")

    @property
    def magnitude(self) -> int:
        return self.M if self.M is not None else max(self.n, self.m)


class FrequencyVector(Mapping[int, int]):
    """Immutable sparse map item -> nonzero frequency."""

    __slots__ = ("_f",)

    def __init__(self, freqs: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = freqs.items() if isinstance(freqs, Mapping) else freqs
        self._f = MappingProxyType({int(d): int(v) for d, v in items if v != 0})

    def __getitem__(self, d: int) -> int:
        return self._f[d]

    def __iter__(self) -> Iterator[int]:
        return iter(self._f)

    def __len__(self) -> int:
        return len(self._f)

    def __repr__(self) -> str:
        return f"FrequencyVector({dict(self._f)})"

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self._f)

    @property
    def l1(self) -> int:
        return sum(abs(v) for v in self._f.values())

    def __add__(self, other: FrequencyVector) -> FrequencyVector:
        out = dict(self._f)
        for d, v in other.items():
            out[d] = out.get(d, 0) + v
        return FrequencyVector(out)


def accumulate(stream: Iterable[tuple[int, int]]) -> FrequencyVector:
    f: dict[int, int] = defaultdict(int)
    for d, delta in stream:
        f[d] += delta
    return FrequencyVector(f)


def exact_sum(fv: Mapping[int, int], spec: FunctionSpec) -> float:
    """g(f) summed smallest-first over the support; the ground-truth oracle."""
    if not fv:
        return 0.0
    vals = np.sort(spec.many(np.fromiter(fv.values(), dtype=np.int64, count=len(fv))))
    return float(sum(vals.tolist()))


class Violation(NamedTuple):
    kind: str
    message: str


def validate_stream(stream: Iterable[tuple[int, int]], params: StreamParams) -> list[Violation]:
    """Report every way a stream breaks the model described by ``params``."""
    out: list[Violation] = []
    f: dict[int, int] = defaultdict(int)
    bound = params.magnitude
    over_m = False
    for k, (d, delta) in enumerate(stream):
        if not 1 <= d <= params.n:
            out.append(Violation("item-range", f"update {k}: item {d} outside [1, {params.n}]"))
        if delta == 0:
            out.append(Violation("zero-delta", f"update {k}: delta is 0"))
        if params.model == "insertion" and delta != 1:
            out.append(Violation("insertion-delta", f"update {k}: delta {delta} in insertion-only stream"))
        f[d] += delta
        if abs(f[d]) > bound and not over_m:
            over_m = True
            out.append(Violation("magnitude", f"update {k}: |f_{d}| = {abs(f[d])} exceeds M = {bound}"))
    l1 = sum(abs(v) for v in f.values())
    if l1 > params.m:
        out.append(Violation("l1-budget", f"sum |f_d| = {l1} exceeds m = {params.m}"))
    return out


# stream files ---------------------------------------------------------------

@dataclass
class StreamFile:
    updates: list[StreamUpdate]
    header: dict[str, str] = field(default_factory=dict)

    @property
    def model(self) -> str:
        return self.header.get("model", "turnstile")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.updates:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        a = np.array(self.updates, dtype=np.int64)
        return a[:, 0].copy(), a[:, 1].copy()

    def params(self, **overrides) -> StreamParams:
        h = self.header
        kw = dict(n=int(h["n"]), m=int(h["m"]), M=int(h["M"]) if "M" in h else None,
                  model=self.model)
        kw.update(overrides)
        return StreamParams(**kw)


def read_stream(path: str | Path) -> StreamFile:
    header: dict[str, str] = {}
    updates: list[StreamUpdate] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("!params"):
            for tok in line.split()[1:]:
                key, _, val = tok.partition("=")
                header[key] = val
            if header.get("model") == "insert":
                header["model"] = "insertion"
            continue
        parts = line.split()
        try:
            if len(parts) == 1:
                updates.append(StreamUpdate(int(parts[0]), 1))
            elif len(parts) == 2:
                updates.append(StreamUpdate(int(parts[0]), int(parts[1])))
            else:
                raise ValueError
        except ValueError:
            raise StreamFormatError(f"{path}:{lineno}: bad update line {raw!r}") from None
    return StreamFile(updates, header)


def write_stream(path: str | Path, updates: Iterable[tuple[int, int]], *, n: int, m: int,
                 model: str = "turnstile", M: int | None = None) -> None:
    tag = "insert" if model == "insertion" else "turnstile"
    lines = [f"!params n={n} m={m}" + (f" M={M}" if M is not None else "") + f" model={tag}"]
    if model == "insertion":
        lines.extend(str(d) for d, _ in updates)
    else:
        lines.extend(f"{d} {delta}" for d, delta in updates)
    Path(path).write_text("\n".join(lines) + "\n")
