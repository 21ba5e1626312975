"""Relay power allocation maximizing the end-to-end signal fraction.

Maximize sum_t log(c_t P_t / (1 + c_t P_t)) subject to sum_t P_t <= P_tot and
0 <= P_t <= P_max_t. The objective is strictly concave and increasing, so the
optimum has every unclipped relay on the common marginal
1/(P_t (1 + c_t P_t)) = mu, with mu found by bisection on the budget.
"""

import math
from dataclasses import dataclass

import numpy as np

from .signal import ConfigurationError


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    c: np.ndarray
    p_total: float
    p_max: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        pm = np.full(c.size, np.inf) if self.p_max is None else np.asarray(self.p_max, dtype=float).reshape(-1)
        if c.size == 0 or pm.size != c.size:
            raise ConfigurationError("c and p_max must be non-empty and of equal length")
        if np.any(~(c > 0)) or not np.all(np.isfinite(c)):
            raise ConfigurationError("channel-to-noise ratios c_t must be finite and > 0")
        if np.any(~(pm > 0)):
            raise ConfigurationError("per-relay caps must be > 0")
        if not (self.p_total > 0 and math.isfinite(self.p_total)):
            raise ConfigurationError("total power budget must be finite and > 0")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p_max", pm)

    @property
    def budget_exceeds_caps(self):
        """True when the caps, not the budget, limit every relay."""
        return float(self.p_max.sum()) <= self.p_total


@dataclass(frozen=True, eq=False)
class AllocationResult:
    p: np.ndarray
    mu: float
    objective: float
    kkt_residual: float
    iterations: int = 0


def objective(problem, p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        return -math.inf
    cp = problem.c * p
    return float(np.sum(np.log(cp) - np.log1p(cp)))


def p_of_mu(c_t, mu):
    """Positive root of P (1 + c P) = 1/mu, in a cancellation-free form."""
    return 2.0 / (mu * (np.sqrt(1.0 + 4.0 * c_t / mu) + 1.0))


def marginal(c_t, p):
    return 1.0 / (p * (1.0 + c_t * p))


def _allocate(problem, mu):
    return np.minimum(p_of_mu(problem.c, mu), problem.p_max)


def solve(problem, max_iter=200):
    c, pm, ptot = problem.c, problem.p_max, problem.p_total
    if problem.budget_exceeds_caps:
        p = pm.copy()
        # budget slack: its multiplier is zero
        return AllocationResult(p, 0.0, objective(problem, p), 0.0, 0)

    T = c.size
    if np.all(c == c[0]) and ptot / T <= pm.min():
        # symmetric relays: the equal split is the optimum, no search needed
        p = np.full(T, ptot / T)
        return AllocationResult(p, float(marginal(c[0], ptot / T)), objective(problem, p), 0.0, 0)
    # at mu_hi even the weakest-gain relay gets only P_tot/T, so the sum is <= P_tot;
    # at mu_lo every relay reaches min(P_tot, cap), so the sum is >= P_tot
    mu_hi = float(marginal(c.min(), ptot / T))
    mu_lo = float(np.min(marginal(c, np.minimum(ptot, pm))))
    lo, hi = math.log(mu_lo), math.log(mu_hi)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        s = _allocate(problem, math.exp(mid)).sum()
        if s > ptot:
            lo = mid
        elif s < ptot:
            hi = mid
        else:
            lo = hi = mid
            break
    cands = [math.exp(lo), math.exp(hi)]
    mu = min(cands, key=lambda m: abs(_allocate(problem, m).sum() - ptot))
    p = _allocate(problem, mu)

    interior = p < pm
    if interior.any():
        g = marginal(c[interior], p[interior])
        resid = float(np.max(np.abs(g - mu)) / mu)
    else:
        resid = 0.0
    return AllocationResult(p, mu, objective(problem, p), resid, it)
