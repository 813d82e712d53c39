"""Acquisition mathematics for information-theoretic safe exploration.

The exploration side scores a safe evaluation at x by the information it is
expected to carry about the binary safety indicator of a target z: the
entropy of the indicator has a Gaussian-shaped closed approximation
ln(2)*exp(-c1*(mu/sigma)^2), under which the expectation of the
post-measurement entropy over the unseen observation is a Gaussian integral
with an exact solution. The optimization side is max-value entropy search:
the information an evaluation carries about the value of the safe optimum,
estimated from a single Gumbel-approximated sample of that optimum.

All formula kernels broadcast over numpy arrays; operation-shaped wrappers
work on single points through a posterior.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, log_ndtr
from scipy.stats import qmc

from .gp import Channel, DegenerateCorrelationError, GaussianPosterior
from .safety import SafeRegion
from .search import (
    ExplorationStallError,
    SearchConfig,
    maximize_joint,
    maximize_single,
)

LN2 = math.log(2.0)
C1 = 1.0 / (math.pi * LN2)
C2 = 2.0 * C1 - 1.0

_MI_CLAMP = 1e-14


@dataclass(frozen=True)
class EntropyConstants:
    """Constants of the entropy approximation; c1 = 1/(pi ln 2), c2 = 2 c1 - 1."""

    c1: float = C1
    c2: float = C2

    def __post_init__(self):
        if abs(self.c1 - 1.0 / (math.pi * math.log(2.0))) > 1e-9:
            raise ValueError("c1 must equal 1/(pi ln 2)")
        if not (-1.0 < self.c2 < 0.0):
            raise ValueError("c2 must lie in (-1, 0)")


class DegenerateInputError(ValueError):
    """A scale parameter that must be positive was not."""


def unsafe_prob(mu, sigma):
    """Probability that a Gaussian with given mean/sd is below zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DegenerateInputError("sigma must be positive")
    out = 0.5 + 0.5 * erf(-mu / (sigma * math.sqrt(2.0)))
    return out if out.ndim else float(out)


def exact_entropy(mu, sigma):
    """Binary entropy (nats) of the safety indicator; 0 at certain outcomes.

    Evaluated through the tail probability of |mu|/sigma, which keeps the
    function exactly symmetric and accurate far from the threshold.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DegenerateInputError("sigma must be positive")
    p = 0.5 * erfc(np.abs(mu) / (sigma * math.sqrt(2.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log(p) - (1.0 - p) * np.log1p(-p)
    h = np.where((p <= 0.0) | (p >= 1.0), 0.0, h)
    return h if h.ndim else float(h)


def approx_entropy(mu, sigma):
    """Gaussian-shaped entropy approximation ln(2) exp(-c1 (mu/sigma)^2)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DegenerateInputError("sigma must be positive")
    out = LN2 * np.exp(-C1 * (mu / sigma) ** 2)
    return out if out.ndim else float(out)


def expected_entropy_after(mu_z, sd_z, sd_x, rho, noise_var):
    """Expected approximate entropy at z after observing at x (closed form).

    Arguments broadcast; noise_var is the observation-noise variance at x.
    Degenerate sd_z = 0 yields 0 (the indicator is already certain);
    sd_x = 0 or rho = 0 reduce to the pre-measurement entropy.
    """
    mu_z = np.asarray(mu_z, dtype=float)
    sd_z = np.asarray(sd_z, dtype=float)
    sd_x = np.asarray(sd_x, dtype=float)
    rho = np.clip(np.asarray(rho, dtype=float), -1.0, 1.0)
    nv = np.asarray(noise_var, dtype=float)
    if np.any(nv <= 0):
        raise DegenerateInputError("noise variance must be positive")

    s2x = sd_x**2
    r2 = rho**2
    total = nv + s2x
    a = nv + s2x * (1.0 - r2)
    b = nv + s2x * (1.0 + C2 * r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio2 = np.where(sd_z > 0, (mu_z / np.where(sd_z > 0, sd_z, 1.0)) ** 2, np.inf)
        out = LN2 * np.sqrt(a / b) * np.exp(-C1 * ratio2 * total / b)
    out = np.where(sd_z > 0, out, 0.0)
    return out if out.ndim else float(out)


def mutual_info_values(mu_z, sd_z, sd_x, rho, noise_var):
    """Approximated information gain about the safety of z from observing x.

    Pre-measurement approximate entropy minus the closed-form expected
    post-measurement entropy, clamped to zero below the cancellation
    threshold. Non-negative for every |rho| <= 1.
    """
    mu_z = np.asarray(mu_z, dtype=float)
    sd_z = np.asarray(sd_z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(sd_z > 0, LN2 * np.exp(-C1 * (mu_z / np.where(sd_z > 0, sd_z, 1.0)) ** 2), 0.0)
    post = expected_entropy_after(mu_z, sd_z, sd_x, rho, noise_var)
    mi = h - post
    mi = np.where(np.abs(mi) < _MI_CLAMP, 0.0, mi)
    mi = np.clip(mi, 0.0, None)
    return mi if mi.ndim else float(mi)


@dataclass(frozen=True)
class MIQuery:
    """A (candidate x, target z) pair against a constraint-channel posterior."""

    x: np.ndarray
    z: np.ndarray
    gp: GaussianPosterior
    noise_var: float  # observation-noise variance at x

    def stats(self) -> tuple[float, float, float, float]:
        xa = np.atleast_2d(np.asarray(self.x, dtype=float))
        za = np.atleast_2d(np.asarray(self.z, dtype=float))
        mu_z, var_z = self.gp.mean_var(za, Channel.CONSTRAINT)
        _, var_x = self.gp.mean_var(xa, Channel.CONSTRAINT)
        sd_z = math.sqrt(max(float(var_z[0]), 0.0))
        sd_x = math.sqrt(max(float(var_x[0]), 0.0))
        if sd_z <= 0 or sd_x <= 0:
            return float(mu_z[0]), sd_z, sd_x, 0.0
        c = float(self.gp.cov(xa, Channel.CONSTRAINT, za, Channel.CONSTRAINT)[0, 0])
        rho = float(np.clip(c / (sd_x * sd_z), -1.0, 1.0))
        return float(mu_z[0]), sd_z, sd_x, rho


def expected_post_entropy(query: MIQuery) -> float:
    mu_z, sd_z, sd_x, rho = query.stats()
    if sd_z <= 0:
        return 0.0
    return float(expected_entropy_after(mu_z, sd_z, sd_x, rho, query.noise_var))


def ise_mutual_info(query: MIQuery) -> float:
    """Information gain for one (x, z) pair; degenerate correlations give 0."""
    try:
        mu_z, sd_z, sd_x, rho = query.stats()
    except DegenerateCorrelationError:
        return 0.0
    return float(mutual_info_values(mu_z, sd_z, sd_x, rho, query.noise_var))


# ---------------------------------------------------------------------------
# posterior views: one query interface for direct and cached evaluation
# ---------------------------------------------------------------------------


class DirectView:
    """Posterior queries computed directly from a GaussianPosterior."""

    def __init__(self, gp: GaussianPosterior):
        self.gp = gp

    def mean_sd(self, X, channel: int) -> tuple[np.ndarray, np.ndarray]:
        m, v = self.gp.mean_var(X, channel)
        return m, np.sqrt(v)

    def cov_matrix(self, X, Z, channel: int) -> np.ndarray:
        return self.gp.cov(X, channel, Z, channel)

    def cov_pairs(self, X, Z, channel: int) -> np.ndarray:
        return self.gp.cov_pairs(X, channel, Z, channel)


def _as_view(gp_or_view):
    return DirectView(gp_or_view) if isinstance(gp_or_view, GaussianPosterior) else gp_or_view


class SafetyGainObjective:
    """Batched (x, z) information-gain objective for the inner optimizer."""

    def __init__(self, view, noise_model):
        self.view = view
        self.noise_model = noise_model

    def __call__(self, Xp: np.ndarray, Zp: np.ndarray) -> np.ndarray:
        mu_z, sd_z = self.view.mean_sd(Zp, Channel.CONSTRAINT)
        _, sd_x = self.view.mean_sd(Xp, Channel.CONSTRAINT)
        cov = self.view.cov_pairs(Xp, Zp, Channel.CONSTRAINT)
        denom = sd_x * sd_z
        rho = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
        nv = self.noise_model.at(Xp)
        return mutual_info_values(mu_z, sd_z, sd_x, rho, nv)

    def grid(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        mu_z, sd_z = self.view.mean_sd(Z, Channel.CONSTRAINT)
        _, sd_x = self.view.mean_sd(X, Channel.CONSTRAINT)
        cov = self.view.cov_matrix(X, Z, Channel.CONSTRAINT)
        denom = np.outer(sd_x, sd_z)
        rho = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
        nv = self.noise_model.at(X)
        return mutual_info_values(
            mu_z[None, :], sd_z[None, :], sd_x[:, None], rho, nv[:, None]
        )


def alpha_ise(gp_or_view, x, noise_model, box, cfg: SearchConfig | None = None, seed: int = 0):
    """Exploration score of a safe candidate x: max over targets z of the
    approximated information gain, with the maximizing z.

    Returns (value, z_star).
    """
    view = _as_view(gp_or_view)
    box = np.asarray(box, dtype=float)
    cfg = cfg or SearchConfig.default_for_dim(box.shape[0])
    x = np.atleast_1d(np.asarray(x, dtype=float))
    obj = SafetyGainObjective(view, noise_model)

    def over_z(Z):
        Xp = np.repeat(x[None, :], len(Z), axis=0)
        return obj(Xp, Z)

    z_star, value = maximize_single(
        over_z, lambda Z: np.ones(len(Z), dtype=bool), box, cfg, seed, anchor=x
    )
    return float(value), z_star


# ---------------------------------------------------------------------------
# max-value entropy search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxValueSample:
    """One sampled value of the safe-set optimum of the objective."""

    value: float


def gumbel_fit(mu: np.ndarray, sd: np.ndarray) -> tuple[float, float]:
    """Fit a Gumbel(a, b) to the max of independent Gaussians by quantile matching.

    Quantiles of P(max <= y) = prod_i Phi((y - mu_i)/sd_i) at 0.25/0.5/0.75
    are located by bisection.
    """
    mu = np.asarray(mu, dtype=float)
    sd = np.clip(np.asarray(sd, dtype=float), 1e-9, None)

    def log_cdf(y: float) -> float:
        return float(np.sum(log_ndtr((y - mu) / sd)))

    lo = float(np.min(mu - 8.0 * sd))
    hi = float(np.max(mu + 8.0 * sd))

    def quantile(q: float) -> float:
        target = math.log(q)
        a, b = lo, hi
        for _ in range(80):
            m = 0.5 * (a + b)
            if log_cdf(m) < target:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    y25, y50, y75 = quantile(0.25), quantile(0.5), quantile(0.75)
    denom = math.log(math.log(4.0)) - math.log(math.log(4.0 / 3.0))
    b = max((y75 - y25) / denom, 0.0)
    a = y50 + b * math.log(math.log(2.0))
    return a, b


def sobol_candidates(box: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Quasi-random candidate set in the box; deterministic given the seed."""
    box = np.asarray(box, dtype=float)
    eng = qmc.Sobol(d=box.shape[0], scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two draws
        u = eng.random(n)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def sample_max_value(
    gp_or_view,
    region: SafeRegion,
    seed: int,
    *,
    box,
    iteration: int = 0,
    n_candidates: int = 1000,
    candidates: np.ndarray | None = None,
) -> MaxValueSample:
    """Draw one Gumbel-approximated sample of the safe-set maximum of f.

    The candidate set is quasi-random points restricted to the current safe
    region, plus every certified point (the seed is always certified).
    """
    view = _as_view(gp_or_view)
    if candidates is None:
        candidates = sobol_candidates(np.asarray(box, dtype=float), n_candidates, seed)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.size == 0 and region.archive_size == 0:
        raise ExplorationStallError("empty candidate set for the max-value sample")
    safe_mask = region.is_safe_mask(candidates, iteration)
    pool = [region.archive_points()]
    if safe_mask.any():
        pool.append(candidates[safe_mask])
    cand = np.unique(np.vstack(pool), axis=0)
    mu, sd = view.mean_sd(cand, Channel.OBJECTIVE)
    a, b = gumbel_fit(mu, sd)
    rng = np.random.default_rng(seed)
    u = float(rng.uniform(1e-12, 1.0 - 1e-12))
    return MaxValueSample(value=a - b * math.log(-math.log(u)))


def alpha_mes_values(mu, sd, ystar):
    """Single-sample max-value information gain at points with posterior
    mean/sd; theta = (ystar - mu)/sd, value theta*pdf/(2*cdf) - ln cdf.

    Points with (numerically) zero sd carry no information and score 0.
    """
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    ok = sd > 1e-12
    theta = np.where(ok, (ystar - mu) / np.where(ok, sd, 1.0), np.inf)
    log_cdf = log_ndtr(theta)
    log_pdf = -0.5 * theta**2 - 0.5 * math.log(2.0 * math.pi)
    with np.errstate(over="ignore", invalid="ignore"):
        hazard = np.exp(log_pdf - log_cdf)
        val = 0.5 * theta * hazard - log_cdf
    val = np.where(ok, val, 0.0)
    val = np.where(np.isfinite(val), val, 0.0)
    return val if val.ndim else float(val)


def alpha_mes(gp_or_view, x, ystar: MaxValueSample | float) -> float:
    """Operation wrapper: single-sample max-value information gain at x."""
    view = _as_view(gp_or_view)
    y = ystar.value if isinstance(ystar, MaxValueSample) else float(ystar)
    mu, sd = view.mean_sd(np.atleast_2d(np.asarray(x, dtype=float)), Channel.OBJECTIVE)
    return float(alpha_mes_values(mu, sd, y)[0])


def alpha_mes_expected(gp_or_view, x, mu_cands, sd_cands, seed: int, n_samples: int = 64) -> float:
    """Multi-sample estimate of the max-value information gain (config option).

    Averages the single-sample form over n_samples Gumbel draws fitted to
    the given candidate marginals.
    """
    view = _as_view(gp_or_view)
    a, b = gumbel_fit(mu_cands, sd_cands)
    rng = np.random.default_rng(seed)
    u = rng.uniform(1e-12, 1.0 - 1e-12, size=n_samples)
    ys = a - b * np.log(-np.log(u))
    mu, sd = view.mean_sd(np.atleast_2d(np.asarray(x, dtype=float)), Channel.OBJECTIVE)
    vals = [float(alpha_mes_values(mu, sd, y)[0]) for y in ys]
    return float(np.mean(vals))


def alpha_mes_hat_values(mu, sd, phi):
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    gap = phi - mu
    out = (sd / gap) ** 2
    return out if out.ndim else float(out)


def alpha_mes_hat(gp_or_view, x, phi: float) -> float:
    """Single-sample surrogate sd^2/(phi - mu)^2; requires phi > mu at x."""
    view = _as_view(gp_or_view)
    mu, sd = view.mean_sd(np.atleast_2d(np.asarray(x, dtype=float)), Channel.OBJECTIVE)
    if not phi > float(mu[0]):
        raise ValueError(f"phi must exceed the posterior mean ({float(mu[0]):g}) at x")
    return float(alpha_mes_hat_values(mu, sd, phi)[0])


# ---------------------------------------------------------------------------
# combined selection
# ---------------------------------------------------------------------------

SELECT_MODES = ("ise_bo", "ise_only", "mes_safe", "theory_combined")


def select_next(
    gp_or_view,
    region: SafeRegion,
    mode: str,
    seed: int,
    *,
    noise_model,
    box,
    search: SearchConfig | None = None,
    iteration: int = 0,
    anchor=None,
    x_starts=None,
    mes_weight: float = 1.0,
    phi: float | None = None,
    mes_candidates: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Pick the next safe evaluation point.

    ise_bo maximizes the larger of the exploration and max-value scores over
    the safe set; ise_only and mes_safe use a single component;
    theory_combined(phi) replaces the max-value score with its surrogate.
    Diagnostics report both component values at the returned point and the
    winning component.
    """
    if mode not in SELECT_MODES:
        raise ValueError(f"unknown selection mode: {mode}")
    if mode == "theory_combined" and phi is None:
        raise ValueError("theory_combined requires phi")
    view = _as_view(gp_or_view)
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    cfg = search or SearchConfig.default_for_dim(d)
    rng = np.random.default_rng(seed)
    seed_ise, seed_mes, seed_ystar = (int(s) for s in rng.integers(0, 2**31 - 1, size=3))
    if anchor is None:
        anchor = region.x0
    if x_starts is None:
        x_starts = region.x0[None, :]

    def feasible(X):
        return region.is_safe_mask(X, iteration, certify=True)

    ise_obj = SafetyGainObjective(view, noise_model)

    result: dict = {"mode": mode, "iteration": iteration}
    x_ise = z_ise = None
    v_ise = -np.inf
    if mode in ("ise_bo", "ise_only", "theory_combined"):
        x_ise, z_ise, v_ise = maximize_joint(
            ise_obj, feasible, box, cfg, seed_ise, anchor=anchor, x_starts=x_starts
        )

    x_mes = None
    v_mes = -np.inf
    ystar = None
    if mode in ("ise_bo", "mes_safe"):
        ystar = sample_max_value(
            view, region, seed_ystar, box=box, iteration=iteration, candidates=mes_candidates
        )

        def mes_over_x(X):
            mu, sd = view.mean_sd(X, Channel.OBJECTIVE)
            return alpha_mes_values(mu, sd, ystar.value)

        x_mes, v_mes = maximize_single(
            mes_over_x, feasible, box, cfg, seed_mes, anchor=anchor, starts=x_starts
        )
        result["ystar"] = ystar.value
    elif mode == "theory_combined":

        def mes_over_x(X):
            mu, sd = view.mean_sd(X, Channel.OBJECTIVE)
            return alpha_mes_hat_values(mu, sd, phi)

        x_mes, v_mes = maximize_single(
            mes_over_x, feasible, box, cfg, seed_mes, anchor=anchor, starts=x_starts
        )
        result["phi"] = phi

    if mode == "ise_only":
        x_next, component = x_ise, "ise"
    elif mode == "mes_safe":
        x_next, component = x_mes, "mes"
    else:
        mes_score = mes_weight * v_mes
        if v_ise >= mes_score:
            x_next, component = x_ise, "ise"
        else:
            x_next, component = x_mes, "mes"

    # diagnostics: both component values at the selected point
    if mode in ("ise_bo", "ise_only", "theory_combined"):
        if component == "ise":
            alpha_ise_at, z_at = float(v_ise), z_ise
        else:
            alpha_ise_at, z_at = alpha_ise(
                view, x_next, noise_model, box, cfg=cfg, seed=seed_ise
            )
        result["alpha_ise"] = alpha_ise_at
        result["z_star"] = np.asarray(z_at, dtype=float) if z_at is not None else None
    else:
        result["alpha_ise"] = None
        result["z_star"] = None
    if mode == "ise_only":
        result["alpha_mes"] = None
    elif mode == "theory_combined":
        result["alpha_mes"] = (
            float(v_mes) if component == "mes" else alpha_mes_hat(view, x_next, phi)
        )
    else:
        mu, sd = view.mean_sd(np.atleast_2d(x_next), Channel.OBJECTIVE)
        result["alpha_mes"] = (
            float(alpha_mes_values(mu, sd, ystar.value)[0]) if ystar is not None else None
        )
    result["component"] = component
    return np.asarray(x_next, dtype=float), result
