"""Computable convergence-analysis quantities.

Includes the per-step information-gain floor eta and its combined variant,
a greedy lower-bound estimator of the kernel's information capacity, the
smallest iteration count meeting a precision target, and the per-GP
expansion-operator fixed point on a discrete grid (an over-approximation of
the reachable safe set; the exact operator intersects over all well-behaved
GPs and is not computable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .acquisition import C1, LN2
from .gp import (
    Channel,
    ChannelKernels,
    GaussianPosterior,
    KernelSpec,
    PosteriorQueryCache,
    _chol_with_jitter,
)
from .safety import BetaSchedule, ConfigError


@dataclass(frozen=True)
class CapacitySequence:
    """Non-decreasing information-capacity values gamma_0 = 0, gamma_1, ..."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) == 0 or v[0] != 0.0:
            raise ConfigError("capacity sequence must start at gamma_0 = 0")
        if np.any(np.diff(v) < -1e-12):
            raise ConfigError("capacity sequence must be non-decreasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def __call__(self, n: int) -> float:
        idx = min(int(n), len(self.values) - 1)
        return float(self.values[idx])

    def __getitem__(self, n: int) -> float:
        return self(n)


def eta(x, mean_bound: float, noise_var: float):
    """Per-step information-gain floor when the max posterior variance is x.

    ln(2) exp(-c1 m^2 / x) (1 - sqrt(nv / (2 c1 x + nv))); strictly
    increasing on (0, inf), approaching 0 as x -> 0+ (for m > 0) and ln 2
    from below as x -> inf.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    m2 = float(mean_bound) ** 2
    out = LN2 * np.exp(-C1 * m2 / x) * (1.0 - np.sqrt(noise_var / (2.0 * C1 * x + noise_var)))
    return out if out.ndim else float(out)


def b_min(x, mean_bound: float, noise_var: float, phi: float):
    """Combined-criterion floor: min of eta and the surrogate branch x/phi."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    x = np.asarray(x, dtype=float)
    out = np.minimum(eta(x, mean_bound, noise_var), x / phi)
    return out if out.ndim else float(out)


def capacity_constant(
    preset: str, noise_var: float, phi: float | None = None, beta: float | None = None
) -> float:
    """The two published forms of the constant C, selectable by preset."""
    if preset == "exploration":
        return LN2 / (noise_var * math.log1p(1.0 / noise_var))
    if preset == "combined":
        if phi is None or beta is None:
            raise ConfigError("combined preset needs phi and beta")
        if phi <= 2.0 * beta:
            raise ConfigError("combined preset needs phi > 2 beta")
        return max(LN2 / noise_var, 1.0 / (phi - 2.0 * beta))
    raise ConfigError(f"unknown capacity-constant preset: {preset}")


def greedy_capacity(
    kernel: KernelSpec, grid: np.ndarray, n_max: int, noise_var: float
) -> CapacitySequence:
    """Greedy lower bound on the information capacity over a finite grid.

    Each step adds the point of largest current posterior variance and
    accumulates 0.5 ln(1 + var/noise_var); the increments are non-negative
    so the sequence is non-decreasing.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    m = len(grid)
    prior = kernel.diag(grid)
    var = prior.copy()
    K_all = kernel.gram(grid, grid)
    Q = np.zeros((0, m))
    L = np.zeros((0, 0))
    gammas = [0.0]
    for _ in range(n_max):
        idx = int(np.argmax(var))
        gain = 0.5 * math.log1p(max(var[idx], 0.0) / noise_var)
        gammas.append(gammas[-1] + gain)
        b = Q[:, idx]
        c2 = prior[idx] + noise_var - float(b @ b)
        c = math.sqrt(max(c2, 1e-300))
        q = (K_all[idx] - b @ Q) / c
        Q = np.vstack([Q, q[None, :]])
        var = np.clip(var - q * q, 0.0, None)
    return CapacitySequence(values=np.asarray(gammas))


def invert_monotone(g, value: float, hi_start: float = 1.0, tol: float = 1e-10) -> float | None:
    """Bisect the increasing function g to find x with g(x) = value.

    Returns None when the value is above the reachable range.
    """
    lo = 0.0
    hi = hi_start
    for _ in range(200):
        if g(hi) >= value:
            break
        hi *= 2.0
        if hi > 1e18:
            return None
    else:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            break
        if g(mid) < value:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def n_epsilon(
    eps: float,
    beta: BetaSchedule,
    gamma: CapacitySequence,
    g,
    C: float,
    n_cap: int,
    prior_bound: float = 1.0,
) -> int | None:
    """Smallest N <= n_cap with beta_N * g^{-1}(C gamma_N / N) <= eps, else None.

    The inverse is capped at prior_bound: the posterior variance never
    exceeds the prior bound, so a per-step requirement outside g's range
    still pins the uncertainty there (this makes huge eps resolve at N=1).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for N in range(1, n_cap + 1):
        val = C * gamma(N) / N
        x = invert_monotone(g, val)
        x_eff = prior_bound if x is None else min(x, prior_bound)
        if beta(N) * x_eff <= eps:
            return N
    return None


def condition_values(
    eps: float,
    beta: BetaSchedule,
    gamma: CapacitySequence,
    g,
    C: float,
    n_cap: int,
    prior_bound: float = 1.0,
) -> np.ndarray:
    """Rows (N, gamma_N, beta_N, beta_N * g^{-1}(C gamma_N / N), log-crossing).

    The last column is ln(g(eps/beta_N) * N / (C gamma_N)), whose zero
    crossing is equivalent to the precision condition being met.
    """
    rows = []
    for N in range(1, n_cap + 1):
        g_n = gamma(N)
        b_n = beta(N)
        val = C * g_n / N
        x = invert_monotone(g, val)
        x_eff = prior_bound if x is None else min(x, prior_bound)
        cond = b_n * x_eff
        if g_n > 0:
            crossing = math.log(g(eps / b_n) * N / (C * g_n)) if g(eps / b_n) > 0 else -math.inf
        else:
            crossing = math.inf
        rows.append((N, g_n, b_n, cond, crossing))
    return np.asarray(rows)


@dataclass
class ExpansionState:
    """Fixed-point snapshot of the per-GP expansion iteration on a grid."""

    grid: np.ndarray
    safe_mask: np.ndarray
    eps: float
    beta: float
    rounds: int
    conditionings: int

    def to_json_dict(self) -> dict:
        return {
            "eps": self.eps,
            "beta": self.beta,
            "rounds": self.rounds,
            "conditionings": self.conditionings,
            "grid": self.grid.tolist(),
            "safe_mask": self.safe_mask.astype(int).tolist(),
        }


MAX_CONDITIONINGS = 10_000


def expansion_fixed_point(
    constraint,
    kernel: KernelSpec,
    noise_var: float,
    grid: np.ndarray,
    x0,
    eps: float,
    beta: float,
    seed: int = 0,
) -> ExpansionState:
    """Iterate the per-GP expansion operator to its fixed point on a grid.

    Conditions the constraint GP on exact values at currently-safe grid
    points (observation noise still enters the Gram diagonal) until
    beta * sd <= eps over the safe set, then reclassifies by the lower
    confidence bound; repeats until the set stops growing. The result
    over-approximates the reachable safe set for this GP.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    i0 = int(np.argmin(np.sum((grid - x0) ** 2, axis=1)))
    s_vals = np.asarray(constraint(grid), dtype=float)
    if s_vals[i0] < 0.0:
        raise ValueError("the safe seed is not truly safe on this grid")

    gp = GaussianPosterior.prior(ChannelKernels.shared(kernel), grid.shape[1])
    cache = PosteriorQueryCache(gp)
    cache.add_set("grid", grid, Channel.CONSTRAINT)

    safe = np.zeros(len(grid), dtype=bool)
    safe[i0] = True
    rounds = 0
    conditionings = 0
    while True:
        rounds += 1
        # shrink uncertainty over the current safe set
        while True:
            mean, sd = cache.mean_sd("grid")
            over = safe & (beta * sd > eps)
            if not over.any():
                break
            idx = int(np.argmax(np.where(over, sd, -np.inf)))
            gp = gp.condition(grid[idx], Channel.CONSTRAINT, float(s_vals[idx]), noise_var)
            cache.advance(gp)
            conditionings += 1
            if conditionings > MAX_CONDITIONINGS:
                raise RuntimeError(
                    f"expansion did not reach beta*sd <= {eps:g} within {MAX_CONDITIONINGS} conditionings"
                )
        mean, sd = cache.mean_sd("grid")
        new_safe = safe | (mean - beta * sd >= 0.0)
        if np.array_equal(new_safe, safe):
            break
        safe = new_safe
    return ExpansionState(
        grid=grid,
        safe_mask=safe,
        eps=eps,
        beta=beta,
        rounds=rounds,
        conditionings=conditionings,
    )
