"""High-probability safe-set bookkeeping.

The safe region at iteration n is the set of parameters whose constraint
lower confidence bound mu - beta_n * sigma is non-negative, unioned with
everything certified at earlier iterations (so membership never shrinks)
and always containing the safe seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gp import Channel, GaussianPosterior


class ConfigError(Exception):
    """Invalid configuration value."""


class CertificationError(Exception):
    """Attempt to certify a point whose confidence-bound test never passed."""


@dataclass(frozen=True)
class BetaSchedule:
    """Confidence multiplier beta_n, constant or the theoretical schedule.

    The theoretical mode evaluates B + R * sqrt(2 * (ln(e/delta) + gamma_n))
    and needs an information-capacity sequence gamma (callable or indexable).
    """

    mode: str = "constant"
    value: float = 3.0
    B: float = 1.0
    R: float = 1.0
    delta: float = 0.05
    gamma: Callable[[int], float] | Sequence[float] | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "theoretical"):
            raise ConfigError(f"unknown beta mode: {self.mode}")
        if self.mode == "constant" and not self.value > 0:
            raise ConfigError("constant beta must be positive")
        if self.mode == "theoretical":
            if not (0.0 < self.delta < 1.0):
                raise ConfigError("delta must lie in (0, 1)")
            if self.gamma is None:
                raise ConfigError("theoretical beta needs a gamma sequence")

    @classmethod
    def constant(cls, value: float) -> "BetaSchedule":
        return cls(mode="constant", value=value)

    @classmethod
    def theoretical(cls, B: float, R: float, delta: float, gamma) -> "BetaSchedule":
        return cls(mode="theoretical", B=B, R=R, delta=delta, gamma=gamma)

    def _gamma_at(self, n: int) -> float:
        if callable(self.gamma):
            return float(self.gamma(n))
        seq = self.gamma
        idx = min(n, len(seq) - 1)
        return float(seq[idx])

    def __call__(self, n: int) -> float:
        if n < 0:
            raise ValueError("iteration index must be >= 0")
        if self.mode == "constant":
            return float(self.value)
        g = self._gamma_at(n)
        return self.B + self.R * math.sqrt(2.0 * (math.log(math.e / self.delta) + g))


def _key(x: np.ndarray) -> bytes:
    return np.ascontiguousarray(np.asarray(x, dtype=float)).tobytes()


class SafeRegion:
    """Constraint-channel safe region with a monotone certification archive.

    Membership for arbitrary points uses the current lower confidence bound;
    the archive holds finitely many points certified at some past iteration
    (evaluated parameters and selection probes that passed the bound), which
    realizes the monotone union. The safe seed is always a member.
    """

    def __init__(self, gp: GaussianPosterior, beta: BetaSchedule, x0):
        self.beta = beta
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self._gp = gp
        self._query = None  # optional (X) -> (mean, sd) override
        self._archive: set[bytes] = {_key(self.x0)}
        self._archive_points: list[np.ndarray] = [self.x0.copy()]

    # -- posterior plumbing --------------------------------------------------

    @property
    def gp(self) -> GaussianPosterior:
        return self._gp

    def advance(self, gp: GaussianPosterior) -> None:
        """Swap in the posterior for the next iteration."""
        self._gp = gp

    def set_query(self, fn) -> None:
        """Route mean/sd lookups through a caller-maintained cache."""
        self._query = fn

    # -- membership ------------------------------------------------------------

    def lcb(self, X, n: int) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._query is not None:
            mean, sd = self._query(X)
        else:
            mean, var = self._gp.mean_var(X, Channel.CONSTRAINT)
            sd = np.sqrt(var)
        return mean - self.beta(n) * sd

    def lcb_mask(self, X, n: int) -> np.ndarray:
        """Points passing the confidence-bound test right now (no archive)."""
        return self.lcb(X, n) >= 0.0

    def archived_mask(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.fromiter((_key(row) in self._archive for row in X), dtype=bool, count=len(X))

    def is_safe_mask(
        self, X, n: int, lcb_mask: np.ndarray | None = None, certify: bool = False
    ) -> np.ndarray:
        """Vectorized membership; optionally archive the points passing the LCB."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if lcb_mask is None:
            lcb_mask = self.lcb_mask(X, n)
        if certify and lcb_mask.any():
            self.certify_batch(X[lcb_mask])
        return lcb_mask | self.archived_mask(X)

    def is_safe(self, x, n: int) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if _key(x) in self._archive:
            return True
        return bool(self.lcb(x[None, :], n)[0] >= 0.0)

    # -- certification -----------------------------------------------------------

    def certify_batch(self, X) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        for row in X:
            k = _key(row)
            if k not in self._archive:
                self._archive.add(k)
                self._archive_points.append(np.array(row, dtype=float))

    def certify(self, x, n: int) -> None:
        """Permanently archive x; requires the LCB test to pass (or have passed)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if _key(x) in self._archive:
            return
        if not self.lcb(x[None, :], n)[0] >= 0.0:
            raise CertificationError(
                f"point {x.tolist()} failed the lower-confidence-bound test at iteration {n}"
            )
        self.certify_batch(x[None, :])

    @property
    def archive_size(self) -> int:
        return len(self._archive)

    def archive_points(self) -> np.ndarray:
        return np.vstack(self._archive_points)


def safe_violation_check(problem, x) -> bool:
    """True constraint violation s(x) < 0; metrics only, never used to select."""
    return bool(problem.constraint(np.atleast_2d(np.asarray(x, dtype=float)))[0] < 0.0)
