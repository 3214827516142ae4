"""Estimators over a Sample, the universality gate and negative-moment helpers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import FunctionSpec
from .sigma import min_cost_balanced, sigma_exact, sigma_fast
from .sketch import Sample


@dataclass(frozen=True)
class EstimateReport:
    value: float
    fn: str
    eps: float | None
    s: int | None
    q: float
    sample_size: int
    universal: bool | None = None

    def to_json(self) -> dict:
        return asdict(self)


def required_s(g: FunctionSpec, eps: float, m: int, n: int) -> int:
    """Sample-size parameter so that q >= min(1, 9 (sigma + 1) / (eps |supp f|))."""
    sigma = sigma_fast(g, eps, m, n).sigma
    return math.ceil(9 * (sigma + 1) / eps - 1e-9)


def build_s(g: FunctionSpec, eps: float, m: int, n: int) -> int:
    """required_s capped at n, the largest s a sketch accepts."""
    return min(required_s(g, eps, m, n), n)


def estimate(sample: Sample, g: FunctionSpec, *, eps: float | None = None,
             s: int | None = None, universal: bool | None = None) -> EstimateReport:
    """Inverse-probability estimate q^-1 * sum_{d in W} g(f_d)."""
    if not 0 < sample.q <= 1:
        raise ValueError(f"sampling probability {sample.q} outside (0, 1]")
    if sample.W:
        vals = np.sort(g.many(np.fromiter(sample.W.values(), dtype=np.int64)))
        total = float(sum(vals.tolist()))
    else:
        total = 0.0
    return EstimateReport(total / sample.q, str(g), eps, s, sample.q, len(sample.W), universal)


def universal_ok(g2: FunctionSpec, eps2: float, build_g: FunctionSpec, build_eps: float,
                 m: int, n: int, *, exact: bool = False) -> bool:
    """Whether a sketch built for (build_g, build_eps) also serves (g2, eps2).

    Compares sigma/eps on both sides with the same sigma routine.
    """
    sig = sigma_exact if exact else sigma_fast
    return sig(g2, eps2, m, n).sigma / eps2 <= sig(build_g, build_eps, m, n).sigma / build_eps


def fp_sigma(p: float, eps: float, m: int, n: int, *, integral: bool = True) -> int:
    """sigma for g(x) = |x|^p, p < 0, from the equal-frequency closed form.

    The real solution of s (m/s)^p <= 1/eps bounds sigma from above.  With
    ``integral`` (the default) it is lowered to the largest support whose
    balanced integer allocation of m is still feasible, which is exact.
    """
    if not p < 0:
        raise ValueError("fp_sigma needs p < 0")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    bound = (m ** -p / eps) ** (1 / (1 - p))
    s = min(n, m, math.floor(bound * (1 + 1e-12)))
    if not integral:
        return max(s, 1)
    g = FunctionSpec.power(p)
    budget = 1 / eps * (1 + 1e-12)
    cost = min_cost_balanced(g, m, s)
    while s > 1 and cost[s - 1] > budget:
        s -= 1
    return max(s, 1)


def harmonic_mean(sample: Sample) -> float:
    """|W| / sum 1/|f_d|; the sampling probability cancels in the ratio."""
    if not sample.W:
        raise ValueError("harmonic mean of an empty sample")
    inv = np.sort(1.0 / np.abs(np.fromiter(sample.W.values(), dtype=np.float64)))
    return len(sample.W) / float(sum(inv.tolist()))


def median_estimate(reports: list[EstimateReport]) -> EstimateReport:
    """Median-of-repetitions amplification; keeps the median run's metadata."""
    if not reports:
        raise ValueError("no successful repetitions")
    order = sorted(reports, key=lambda r: r.value)
    mid = order[(len(order) - 1) // 2]
    value = float(np.median([r.value for r in reports]))
    return EstimateReport(value, mid.fn, mid.eps, mid.s, mid.q, mid.sample_size, mid.universal)
