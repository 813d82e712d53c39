"""Derivative-free maximization of acquisition surfaces over box domains.

Three modes: exhaustive product grids (exact on the grid), multi-start
compass/pattern search, and restriction to a random one-dimensional line
through an anchor point (for high-dimensional problems). Feasibility is
handled by rejection: infeasible probes score -inf and the returned point
always satisfies the feasibility predicate.

Objectives are batched: a single-point objective maps an (m, d) array to m
values; a joint objective maps two (m, d) arrays (x-part, z-part) to m
values and may expose ``.grid(X, Z) -> (len(X), len(Z))`` for product
evaluation, which grid and line modes exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ExplorationStallError(Exception):
    """No feasible probe was found; the safe set gives nowhere to evaluate."""


@dataclass(frozen=True)
class SearchConfig:
    mode: str = "grid"
    grid_resolution: int = 0  # 0 -> per-dimension default
    multistart_count: int = 8
    initial_step: float = 0.25  # fraction of the box span
    shrink: float = 0.5
    tol: float = 1e-3  # stop when the step fraction drops below this
    max_evals: int = 4000
    line_points: int = 64

    def __post_init__(self):
        if self.mode not in ("grid", "multistart", "line"):
            raise ValueError(f"unknown search mode: {self.mode}")
        if self.grid_resolution < 0 or (0 < self.grid_resolution < 2):
            raise ValueError("grid resolution must be 0 (default) or >= 2")
        if self.initial_step <= 0 or self.shrink <= 0 or self.shrink >= 1 or self.tol <= 0:
            raise ValueError("invalid pattern-search parameters")

    @classmethod
    def default_for_dim(cls, d: int) -> "SearchConfig":
        if d <= 2:
            return cls(mode="grid")
        if d == 3:
            return cls(mode="multistart")
        return cls(mode="line")


def default_grid_resolution(d: int) -> int:
    # 1-D grids must resolve the safe-set certification radius, which can be
    # a few hundredths of the box span when the prior scale dwarfs the values
    return {1: 801, 2: 24}.get(d, 5)


def grid_axes(box: np.ndarray, resolution: int) -> list[np.ndarray]:
    box = np.asarray(box, dtype=float)
    return [np.linspace(lo, hi, resolution) for lo, hi in box]


def product_grid(box: np.ndarray, resolution: int) -> np.ndarray:
    axes = grid_axes(box, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def line_through(box: np.ndarray, anchor: np.ndarray, direction: np.ndarray, n: int) -> np.ndarray:
    """Evenly spaced points on the box-clipped line anchor + t * direction."""
    box = np.asarray(box, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    d = direction / np.linalg.norm(direction)
    t_lo, t_hi = -np.inf, np.inf
    for i in range(len(anchor)):
        if abs(d[i]) > 1e-12:
            a = (box[i, 0] - anchor[i]) / d[i]
            b = (box[i, 1] - anchor[i]) / d[i]
            t_lo = max(t_lo, min(a, b))
            t_hi = min(t_hi, max(a, b))
    if not np.isfinite(t_lo) or not np.isfinite(t_hi) or t_hi < t_lo:
        t_lo = t_hi = 0.0
    ts = np.linspace(t_lo, t_hi, n)
    pts = anchor[None, :] + ts[:, None] * d[None, :]
    return np.clip(pts, box[:, 0], box[:, 1])


def _grid_argmax(values: np.ndarray) -> int:
    # first occurrence of the maximum = lexicographically smallest grid point
    return int(np.argmax(values))


def _masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.where(mask, values, -np.inf)
    return out


def _pattern_search(objective, feasible, box, start, cfg: SearchConfig, budget: list[int]):
    """Compass search from a feasible start; returns (point, value)."""
    box = np.asarray(box, dtype=float)
    span = box[:, 1] - box[:, 0]
    x = np.clip(np.asarray(start, dtype=float), box[:, 0], box[:, 1])
    fx = float(objective(x[None, :])[0])
    budget[0] -= 1
    step = cfg.initial_step
    d = len(x)
    while step >= cfg.tol and budget[0] > 0:
        probes = np.repeat(x[None, :], 2 * d, axis=0)
        for i in range(d):
            probes[2 * i, i] = min(x[i] + step * span[i], box[i, 1])
            probes[2 * i + 1, i] = max(x[i] - step * span[i], box[i, 0])
        ok = feasible(probes)
        vals = np.full(len(probes), -np.inf)
        if ok.any():
            vals[ok] = objective(probes[ok])
        budget[0] -= int(ok.sum())
        best = int(np.argmax(vals))
        if vals[best] > fx:
            x = probes[best]
            fx = float(vals[best])
        else:
            step *= cfg.shrink
    return x, fx


def _coarse_floor_points(box: np.ndarray) -> np.ndarray:
    return product_grid(box, 5)


def _with_extras(base: np.ndarray, extras) -> np.ndarray:
    """Append extra probe rows (deduplicated against nothing; order kept)."""
    if extras is None or len(extras) == 0:
        return base
    return np.vstack([base, np.atleast_2d(np.asarray(extras, dtype=float))])


def maximize_single(objective, feasible, box, cfg: SearchConfig, seed: int, anchor=None, starts=None):
    """Maximize a batched objective over feasible points in the box.

    Returns (x, value). Raises ExplorationStallError when no probe is
    feasible.
    """
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    rng = np.random.default_rng(seed)

    if cfg.mode == "grid":
        res = cfg.grid_resolution or default_grid_resolution(d)
        X = _with_extras(product_grid(box, res), starts)
        mask = feasible(X)
        if not mask.any():
            raise ExplorationStallError("no feasible point on the search grid")
        vals = _masked(objective(X), mask)
        i = _grid_argmax(vals)
        return X[i], float(vals[i])

    if cfg.mode == "line":
        anchor = np.asarray(anchor if anchor is not None else box.mean(axis=1), dtype=float)
        direction = rng.standard_normal(d)
        X = _with_extras(line_through(box, anchor, direction, cfg.line_points), starts)
        mask = feasible(X)
        if not mask.any():
            raise ExplorationStallError("no feasible point on the search line")
        vals = _masked(objective(X), mask)
        i = _grid_argmax(vals)
        return X[i], float(vals[i])

    # multistart pattern search, floored by a coarse exhaustive grid
    coarse = _coarse_floor_points(box)
    cand = [coarse]
    if starts is not None and len(starts):
        cand.append(np.atleast_2d(np.asarray(starts, dtype=float)))
    if anchor is not None:
        cand.append(np.atleast_2d(np.asarray(anchor, dtype=float)))
    cand.append(
        box[:, 0] + rng.random((cfg.multistart_count, d)) * (box[:, 1] - box[:, 0])
    )
    probes = np.vstack(cand)
    mask = feasible(probes)
    if not mask.any():
        raise ExplorationStallError("no feasible start for multistart search")
    vals = _masked(objective(probes), mask)
    order = np.argsort(-vals)[: cfg.multistart_count]
    best_x, best_v = probes[order[0]], float(vals[order[0]])
    budget = [cfg.max_evals]
    for idx in order:
        if not np.isfinite(vals[idx]):
            continue
        x, v = _pattern_search(objective, feasible, box, probes[idx], cfg, budget)
        if v > best_v:
            best_x, best_v = x, v
        if budget[0] <= 0:
            break
    return best_x, best_v


def maximize_joint(objective, feasible_x, box, cfg: SearchConfig, seed: int, anchor=None, x_starts=None):
    """Maximize objective(x, z) over feasible x and unconstrained z in the box.

    Grid mode is exhaustive over the product of the two grids; line mode
    restricts x and z to one shared random line through the anchor.
    Returns (x, z, value).
    """
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    rng = np.random.default_rng(seed)

    if cfg.mode in ("grid", "line"):
        if cfg.mode == "grid":
            res = cfg.grid_resolution or default_grid_resolution(d)
            Z = product_grid(box, res)
        else:
            anchor = np.asarray(anchor if anchor is not None else box.mean(axis=1), dtype=float)
            direction = rng.standard_normal(d)
            Z = line_through(box, anchor, direction, cfg.line_points)
        X = _with_extras(Z, x_starts)
        mask = feasible_x(X)
        if not mask.any():
            raise ExplorationStallError(f"no feasible x among the {cfg.mode} probes")
        # product values over the base set via .grid, extra rows separately
        M = _joint_values(objective, Z, Z)
        if len(X) > len(Z):
            M = np.vstack([M, _joint_values(objective, X[len(Z) :], Z)])
        M[~mask, :] = -np.inf
        flat = _grid_argmax(M.ravel())
        i, j = divmod(flat, len(Z))
        return X[i], Z[j], float(M[i, j])

    # multistart over the joint (x, z) space; z unconstrained
    joint_box = np.vstack([box, box])

    def joint_objective(P):
        return objective(P[:, :d], P[:, d:])

    def joint_feasible(P):
        return feasible_x(P[:, :d])

    coarse = _coarse_floor_points(box)
    cmask = feasible_x(coarse)
    starts = []
    if cmask.any():
        Xc = coarse[cmask]
        M = _joint_values(objective, Xc, coarse)
        flat = _grid_argmax(M.ravel())
        i, j = divmod(flat, len(coarse))
        starts.append(np.concatenate([Xc[i], coarse[j]])[None, :])
    if x_starts is not None and len(x_starts):
        xs = np.atleast_2d(np.asarray(x_starts, dtype=float))
        zs = box[:, 0] + rng.random(xs.shape) * (box[:, 1] - box[:, 0])
        starts.append(np.hstack([xs, zs]))
    if anchor is not None:
        a = np.asarray(anchor, dtype=float)
        starts.append(np.concatenate([a, a])[None, :])
    sx = box[:, 0] + rng.random((cfg.multistart_count, d)) * (box[:, 1] - box[:, 0])
    sz = box[:, 0] + rng.random((cfg.multistart_count, d)) * (box[:, 1] - box[:, 0])
    starts.append(np.hstack([sx, sz]))
    P = np.vstack(starts)
    mask = joint_feasible(P)
    if not mask.any():
        raise ExplorationStallError("no feasible start for joint multistart search")
    vals = _masked(joint_objective(P), mask)
    order = np.argsort(-vals)[: cfg.multistart_count]
    best_p, best_v = P[order[0]], float(vals[order[0]])
    budget = [cfg.max_evals]
    for idx in order:
        if not np.isfinite(vals[idx]):
            continue
        p, v = _pattern_search(joint_objective, joint_feasible, joint_box, P[idx], cfg, budget)
        if v > best_v:
            best_p, best_v = p, v
        if budget[0] <= 0:
            break
    return best_p[:d], best_p[d:], best_v


def _joint_values(objective, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """(len(X), len(Z)) objective values, via .grid when available."""
    grid_fn = getattr(objective, "grid", None)
    if grid_fn is not None:
        return np.asarray(grid_fn(X, Z), dtype=float).copy()
    nx, nz = len(X), len(Z)
    Xp = np.repeat(X, nz, axis=0)
    Zp = np.tile(Z, (nx, 1))
    return np.asarray(objective(Xp, Zp), dtype=float).reshape(nx, nz)
