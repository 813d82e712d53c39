"""Comparison strategies on a discrete candidate set.

All baselines except the unconstrained max-value search only return points
that pass the safe-region membership test. SafeOpt follows the classical
expander/maximizer construction with the safe set defined through the GP
posterior bound; the Lipschitz cone only enters the expander test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .acquisition import (
    DirectView,
    _as_view,
    alpha_mes_values,
    gumbel_fit,
    sample_max_value,
    sobol_candidates,
)
from .gp import Channel
from .safety import SafeRegion
from .search import ExplorationStallError, product_grid


@dataclass(frozen=True)
class BaselineSpec:
    kind: str  # safeopt | uncertainty | mes_safe | mes_unconstrained
    lipschitz: float = 1.0
    grid_resolution: int = 0  # 0 -> default for the dimension
    candidate_count: int = 1024  # quasi-random fallback for d > 2

    def __post_init__(self):
        if self.kind not in ("safeopt", "uncertainty", "mes_safe", "mes_unconstrained"):
            raise ValueError(f"unknown baseline kind: {self.kind}")
        if self.kind == "safeopt" and not self.lipschitz > 0:
            raise ValueError("safeopt needs a positive Lipschitz constant")


def default_candidates(box: np.ndarray, spec: BaselineSpec, seed: int) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    if d <= 2:
        res = spec.grid_resolution or (201 if d == 1 else 50)
        return product_grid(box, res)
    return sobol_candidates(box, spec.candidate_count, seed)


def _argmax_lex(scores: np.ndarray, X: np.ndarray) -> int:
    """Index of the max score; ties resolved to the lexicographically smallest point."""
    best = np.max(scores)
    tied = np.flatnonzero(scores == best)
    if len(tied) == 1:
        return int(tied[0])
    order = np.lexsort(X[tied].T[::-1])
    return int(tied[order[0]])


def select_baseline(
    spec: BaselineSpec,
    gp_or_view,
    region: SafeRegion,
    seed: int,
    *,
    box,
    iteration: int = 0,
    candidates: np.ndarray | None = None,
    extra_candidates: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Pick the next point for one baseline strategy on a candidate set.

    Candidates default to a product grid (d <= 2) or a quasi-random set;
    extra_candidates (evaluated points, the safe seed) are appended so the
    safe intersection is never empty once something is certified.
    """
    view = _as_view(gp_or_view)
    box = np.asarray(box, dtype=float)
    if candidates is None:
        candidates = default_candidates(box, spec, seed)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if extra_candidates is None:
        extra_candidates = region.x0[None, :]
    cand = np.vstack([candidates, np.atleast_2d(np.asarray(extra_candidates, dtype=float))])

    mu_f, sd_f = view.mean_sd(cand, Channel.OBJECTIVE)
    mu_s, sd_s = view.mean_sd(cand, Channel.CONSTRAINT)
    safe = region.is_safe_mask(cand, iteration, certify=True)
    diag: dict = {"kind": spec.kind, "safe_candidates": int(safe.sum())}

    if spec.kind == "mes_unconstrained":
        a, b = gumbel_fit(mu_f, sd_f)
        rng = np.random.default_rng(seed)
        u = float(rng.uniform(1e-12, 1.0 - 1e-12))
        ystar = a - b * np.log(-np.log(u))
        scores = alpha_mes_values(mu_f, sd_f, ystar)
        i = _argmax_lex(scores, cand)
        diag.update(value=float(scores[i]), ystar=float(ystar))
        return cand[i], diag

    if not safe.any():
        raise ExplorationStallError(f"{spec.kind}: no safe candidate available")

    if spec.kind == "uncertainty":
        scores = np.where(safe, sd_s, -np.inf)
        i = _argmax_lex(scores, cand)
        diag.update(value=float(scores[i]))
        return cand[i], diag

    if spec.kind == "mes_safe":
        ystar = sample_max_value(
            view, region, seed, box=box, iteration=iteration, candidates=candidates
        )
        scores = np.where(safe, alpha_mes_values(mu_f, sd_f, ystar.value), -np.inf)
        i = _argmax_lex(scores, cand)
        diag.update(value=float(scores[i]), ystar=ystar.value)
        return cand[i], diag

    # safeopt
    beta = region.beta(iteration)
    ucb_f = mu_f + beta * sd_f
    lcb_f = mu_f - beta * sd_f
    ucb_s = mu_s + beta * sd_s
    maximizers = safe & (ucb_f >= np.max(lcb_f[safe]))
    expanders = np.zeros(len(cand), dtype=bool)
    if (~safe).any():
        dist = cdist(cand[safe], cand[~safe]).min(axis=1)
        expanders[safe] = ucb_s[safe] - spec.lipschitz * dist >= 0.0
    pool = maximizers | expanders
    if not pool.any():
        pool = safe
    width = np.maximum(sd_f, sd_s)
    scores = np.where(pool, width, -np.inf)
    i = _argmax_lex(scores, cand)
    diag.update(
        value=float(scores[i]),
        maximizers=int(maximizers.sum()),
        expanders=int(expanders.sum()),
    )
    return cand[i], diag
