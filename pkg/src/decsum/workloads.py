"""Seeded stream generators for experiments and acceptance workloads."""

from __future__ import annotations

import numpy as np

from .core import FunctionSpec, StreamUpdate
from .sigma import s_values

GENERATORS = ("uniform-support", "zipf", "sigma-boundary", "cancel-heavy")


def _split(rng: np.random.Generator, total: int, parts: int) -> list[int]:
    """Random composition of ``total`` into at most ``parts`` positive pieces."""
    parts = max(1, min(parts, total))
    if parts == 1:
        return [total]
    cuts = np.sort(rng.choice(np.arange(1, total), parts - 1, replace=False))
    return np.diff(np.concatenate(([0], cuts, [total]))).tolist()


def _emit(rng: np.random.Generator, items, freqs, model: str) -> list[StreamUpdate]:
    updates: list[StreamUpdate] = []
    for d, f in zip(np.asarray(items).tolist(), np.asarray(freqs).tolist()):
        if f == 0:
            continue
        if model == "insertion":
            updates.extend([StreamUpdate(d, 1)] * f)
        else:
            sign = 1 if f > 0 else -1
            updates.extend(StreamUpdate(d, sign * c)
                           for c in _split(rng, abs(f), int(rng.integers(1, 4))))
    order = rng.permutation(len(updates))
    return [updates[i] for i in order]


def _signs(rng: np.random.Generator, size: int, model: str) -> np.ndarray:
    if model == "insertion":
        return np.ones(size, dtype=np.int64)
    return rng.choice(np.array([-1, 1]), size)


def uniform_support(rng: np.random.Generator, n: int, m: int, k: int,
                    model: str = "turnstile") -> list[StreamUpdate]:
    """k distinct items whose frequencies differ by at most one and sum to m."""
    if not 1 <= k <= min(n, m):
        raise ValueError(f"need 1 <= k <= min(n, m), got k={k}")
    items = rng.choice(n, k, replace=False) + 1
    freqs = np.full(k, m // k, dtype=np.int64)
    freqs[: m % k] += 1
    return _emit(rng, items, freqs * _signs(rng, k, model), model)


def zipf(rng: np.random.Generator, n: int, m: int, alpha: float,
         model: str = "turnstile") -> list[StreamUpdate]:
    """m draws from a Zipf(alpha) law over a random ranking of [n]."""
    weights = np.arange(1, n + 1, dtype=np.float64) ** -alpha
    ranking = rng.permutation(n) + 1
    draws = ranking[rng.choice(n, size=m, p=weights / weights.sum())]
    items, counts = np.unique(draws, return_counts=True)
    return _emit(rng, items, counts * _signs(rng, items.size, model), model)


def sigma_boundary(rng: np.random.Generator, n: int, m: int, g: FunctionSpec, eps: float,
                   model: str = "turnstile") -> list[StreamUpdate]:
    """floor(s(y)) items of equal frequency y, for the y maximizing s(y)."""
    ys = np.arange(1, m + 1)
    s = s_values(g, eps, m, n, ys)
    y = int(ys[np.argmax(s)])
    k = max(1, int(np.floor(s.max() + 1e-9)))
    items = rng.choice(n, k, replace=False) + 1
    return _emit(rng, items, np.full(k, y) * _signs(rng, k, model), model)


def cancel_heavy(rng: np.random.Generator, n: int, m: int, k: int, cancel: float = 0.5,
                 model: str = "turnstile") -> list[StreamUpdate]:
    """k touched items, a ``cancel`` fraction of which are inserted then fully deleted."""
    if model == "insertion":
        raise ValueError("cancel-heavy needs the turnstile model")
    if not 0 <= cancel <= 1:
        raise ValueError("cancel fraction must lie in [0, 1]")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    items = rng.choice(n, k, replace=False) + 1
    n_cancel = int(round(cancel * k))
    gone, kept = items[:n_cancel], items[n_cancel:]
    updates: list[StreamUpdate] = []
    if kept.size:
        if kept.size > m:
            raise ValueError("more surviving items than the L1 budget m")
        freqs = np.full(kept.size, m // kept.size, dtype=np.int64)
        freqs[: m % kept.size] += 1
        updates = _emit(rng, kept, freqs * _signs(rng, kept.size, model), model)
    top = max(1, m // k)
    for d in gone.tolist():
        a = int(rng.integers(1, top + 1))
        sign = int(rng.choice([-1, 1]))
        updates.extend(StreamUpdate(d, sign * c) for c in _split(rng, a, 2))
        updates.extend(StreamUpdate(d, -sign * c) for c in _split(rng, a, 2))
    order = rng.permutation(len(updates))
    return [updates[i] for i in order]


def generate(name: str, rng: np.random.Generator, n: int, m: int, model: str = "turnstile",
             *, k: int | None = None, alpha: float = 1.1, g: FunctionSpec | None = None,
             eps: float = 0.2, cancel: float = 0.5) -> list[StreamUpdate]:
    if name == "uniform-support":
        return uniform_support(rng, n, m, k if k is not None else min(n, m) // 2 or 1, model)
    if name == "zipf":
        return zipf(rng, n, m, alpha, model)
    if name == "sigma-boundary":
        return sigma_boundary(rng, n, m, g or FunctionSpec.power(-1), eps, model)
    if name == "cancel-heavy":
        return cancel_heavy(rng, n, m, k if k is not None else min(n, m) // 2 or 1, cancel, model)
    raise ValueError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
