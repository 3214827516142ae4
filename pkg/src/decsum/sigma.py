"""The support-size parameter sigma(eps, g, m, n).

sigma is the largest support of a nonnegative integer vector with L1 norm at
most m whose g-sum stays below g(1)/eps.  It sets both the sample size of the
sketch and the space lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FunctionSpec

# relative slack on the g-sum constraint so exact boundaries survive rounding
_REL_TOL = 1e-12
# budget (in array cells touched) for the dynamic program on non-convex g
DP_WORK_LIMIT = 4 * 10**9
EXACT_MAX_M = 10**7


class SigmaSizeError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaResult:
    sigma: int
    witness_y: int
    mode: str  # "exact" | "fast"

    def __int__(self) -> int:
        return self.sigma


def _check(eps: float, m: int, n: int) -> None:
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")


def s_values(g: FunctionSpec, eps: float, m: int, n: int, ys: np.ndarray) -> np.ndarray:
    gy = g.many(ys)
    g1 = g(1)
    with np.errstate(divide="ignore"):
        weight = np.where(gy > 0, g1 / (eps * np.where(gy > 0, gy, 1.0)), np.inf)
    return np.minimum(np.minimum(float(n), m / ys.astype(np.float64)), weight)


def s_of_y(g: FunctionSpec, eps: float, m: int, n: int, y: int) -> float:
    """Support reachable when every nonzero frequency equals y, capped at n."""
    _check(eps, m, n)
    if not 1 <= y <= m:
        raise ValueError(f"y={y} outside [1, {m}]")
    gy = g(y)
    weight = math.inf if gy == 0 else g(1) / (eps * gy)
    return min(float(n), m / y, weight)


def _argmax_y(g: FunctionSpec, eps: float, m: int, n: int, ys: np.ndarray) -> tuple[float, int]:
    s = s_values(g, eps, m, n, ys)
    i = int(np.argmax(s))
    return float(s[i]), int(ys[i])


def min_cost_balanced(g: FunctionSpec, m: int, kmax: int) -> np.ndarray:
    """C(k) for k = 1..kmax when g is convex: spread m as evenly as possible."""
    G = g.many(np.arange(0, m + 2))
    ks = np.arange(1, kmax + 1)
    q, r = np.divmod(m, ks)
    return (ks - r) * G[q] + r * G[np.minimum(q + 1, m + 1)]


def _sigma_dp(g: FunctionSpec, m: int, kmax: int, budget: float) -> int:
    # Only the first frequency of each run of equal g values matters: a larger
    # frequency in the same run costs the same and uses more of the budget m.
    G = g.many(np.arange(0, m + 1))
    ys = [1] + [y for y in range(2, m + 1) if G[y] < G[y - 1]]
    if len(ys) * (m + 1) * kmax > DP_WORK_LIMIT:
        raise SigmaSizeError(f"exact sigma too large: {len(ys)} run starts, m={m}, k<={kmax}")
    inf = np.inf
    # prev[t]: min g-sum of k items with total mass exactly t
    prev = np.full(m + 1, inf)
    prev[0] = 0.0
    best = 0
    for k in range(1, kmax + 1):
        cur = np.full(m + 1, inf)
        for y in ys:
            np.minimum(cur[y:], prev[: m + 1 - y] + G[y], out=cur[y:])
        if cur.min() > budget:
            break  # min cost is nondecreasing in k
        best = k
        prev = cur
    return best


def sigma_exact(g: FunctionSpec, eps: float, m: int, n: int) -> SigmaResult:
    """Exact sigma by optimizing over all integer frequency vectors.

    Convex g uses the balanced allocation (optimal by an exchange argument);
    otherwise a dynamic program over frequency multisets is run.
    """
    _check(eps, m, n)
    if m > EXACT_MAX_M:
        raise SigmaSizeError(f"m={m} exceeds the exact-sigma limit {EXACT_MAX_M}")
    kmax = min(n, m)
    budget = g(1) / eps * (1 + _REL_TOL)
    if g.is_convex(m + 1):
        costs = min_cost_balanced(g, m, kmax)
        feasible = np.nonzero(costs <= budget)[0]
        sigma = int(feasible[-1]) + 1
    else:
        sigma = _sigma_dp(g, m, kmax, budget)
    _, y = _argmax_y(g, eps, m, n, np.arange(1, m + 1))
    return SigmaResult(sigma, y, "exact")


def sigma_fast(g: FunctionSpec, eps: float, m: int, n: int) -> SigmaResult:
    """At most 4*sigma (+4), never below sigma; evaluates g at O(log m) points."""
    _check(eps, m, n)
    ys = 1 << np.arange(0, m.bit_length(), dtype=np.int64)
    best, y = _argmax_y(g, eps, m, n, ys)
    sigma = min(n, m, int(math.floor(4 * best + 1e-9)))
    return SigmaResult(sigma, y, "fast")


def check_ps_relation(g: FunctionSpec, eps: float, alpha: float, m: int, n: int) -> bool:
    """eps * (1 + sigma_eps) >= alpha * sigma_alpha for alpha < eps."""
    if not 0 < alpha < eps <= 0.5:
        raise ValueError("need 0 < alpha < eps <= 1/2")
    s_eps = sigma_exact(g, eps, m, n).sigma
    s_alpha = sigma_exact(g, alpha, m, n).sigma
    return eps * (1 + s_eps) >= alpha * s_alpha * (1 - _REL_TOL)
