"""Seeded experiment campaigns over benchmarks and strategies.

Each (strategy, seed) run writes one CSV trace with frozen columns
``n,x...,component,alpha_ise,alpha_mes,yf,ys,f_true,s_true,violation,regret``
and a campaign writes one JSON summary. Runs are deterministic given the
config: repeated campaigns produce bit-identical CSVs.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import DirectView, select_next, sobol_candidates
from .baselines import BaselineSpec, select_baseline
from .benchmarks import BenchmarkProblem, make_problem, simple_regret
from .gp import Channel, ChannelKernels, GaussianPosterior, KernelSpec, NoiseModel, PosteriorQueryCache
from .safety import BetaSchedule, ConfigError, SafeRegion
from .search import SearchConfig, product_grid, default_grid_resolution

logger = logging.getLogger(__name__)

SELECT_STRATEGIES = ("ise_bo", "ise_only", "theory_combined")
BASELINE_STRATEGIES = ("mes_safe", "mes_unconstrained", "uncertainty", "safeopt")
ALL_STRATEGIES = SELECT_STRATEGIES + BASELINE_STRATEGIES

CSV_FIXED_COLUMNS = (
    "component",
    "alpha_ise",
    "alpha_mes",
    "yf",
    "ys",
    "f_true",
    "s_true",
    "violation",
    "regret",
)

OUTPUT_DIR_ENV = "SAFEBO_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    benchmark: str
    strategy: str
    iterations: int
    seeds: tuple[int, ...]
    beta: BetaSchedule | None = None
    lipschitz: float = 1.0
    phi: float | None = None
    mes_weight: float = 1.0
    search: SearchConfig | None = None
    kernel_overrides: dict | None = None
    noise_var_override: float | None = None
    observe_objective: bool = True
    mes_candidate_count: int = 1000
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in ALL_STRATEGIES:
            raise ConfigError(f"unknown strategy '{self.strategy}'; known: {ALL_STRATEGIES}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if len(self.seeds) == 0 or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if self.strategy == "theory_combined" and self.phi is None:
            raise ConfigError("theory_combined requires phi")
        if self.strategy == "safeopt" and not self.lipschitz > 0:
            raise ConfigError("safeopt requires a positive lipschitz constant")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            strategy = raw["strategy"]
            if isinstance(strategy, dict):
                name = strategy["name"]
                extra = {k: v for k, v in strategy.items() if k != "name"}
            else:
                name = strategy
                extra = {}
            beta = None
            if "beta" in raw:
                b = raw["beta"]
                if b.get("mode", "constant") == "constant":
                    beta = BetaSchedule.constant(float(b["value"]))
                else:
                    beta = BetaSchedule.theoretical(
                        B=float(b["B"]), R=float(b["R"]), delta=float(b["delta"]),
                        gamma=b.get("gamma", lambda n: 0.0),
                    )
            search = None
            if "search" in raw:
                search = SearchConfig(**raw["search"])
            return cls(
                benchmark=raw["benchmark"],
                strategy=name,
                iterations=int(raw["iterations"]),
                seeds=tuple(int(s) for s in raw["seeds"]),
                beta=beta,
                lipschitz=float(extra.get("lipschitz", raw.get("lipschitz", 1.0))),
                phi=extra.get("phi", raw.get("phi")),
                mes_weight=float(raw.get("mes_weight", 1.0)),
                search=search,
                kernel_overrides=raw.get("kernel_overrides"),
                noise_var_override=raw.get("noise_var_override"),
                observe_objective=bool(raw.get("observe_objective", True)),
                mes_candidate_count=int(raw.get("mes_candidate_count", 1000)),
                output_dir=raw.get("output_dir"),
                workers=int(raw.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc


@dataclass
class RunRecord:
    benchmark: str
    strategy: str
    seed: int
    dim: int
    n: np.ndarray
    x: np.ndarray  # (N, d)
    component: list[str]
    alpha_ise: np.ndarray
    alpha_mes: np.ndarray
    yf: np.ndarray
    ys: np.ndarray
    f_true: np.ndarray
    s_true: np.ndarray
    violation: np.ndarray
    regret: np.ndarray
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.n)

    def summary(self) -> dict:
        final = float(self.regret[-1])
        return {
            "benchmark": self.benchmark,
            "strategy": self.strategy,
            "seed": self.seed,
            "iterations": int(self.iterations),
            "final_regret": final if np.isfinite(final) else None,
            "violation_fraction": float(self.violation.mean()),
            "wall_time_s": round(self.wall_time, 3),
        }

    def csv_header(self) -> str:
        xcols = ",".join(f"x{i}" for i in range(self.dim))
        return f"n,{xcols}," + ",".join(CSV_FIXED_COLUMNS)

    def to_csv(self) -> str:
        def fmt(v) -> str:
            if v is None or (isinstance(v, float) and np.isnan(v)):
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = [self.csv_header()]
        for i in range(self.iterations):
            cells = [str(int(self.n[i]))]
            cells += [repr(float(c)) for c in self.x[i]]
            cells += [
                self.component[i],
                fmt(float(self.alpha_ise[i])),
                fmt(float(self.alpha_mes[i])),
                fmt(float(self.yf[i])),
                fmt(float(self.ys[i])),
                fmt(float(self.f_true[i])),
                fmt(float(self.s_true[i])),
                str(int(self.violation[i])),
                repr(float(self.regret[i])),
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


class CachedView:
    """Posterior view with incrementally-updated statistics on static sets.

    mean_sd and cov_matrix recognize registered arrays (or arrays whose
    leading rows are a registered array) by content and serve them from the
    incremental cache; everything else is computed directly.
    """

    def __init__(self, gp: GaussianPosterior):
        self.tracker = PosteriorQueryCache(gp)
        self._direct = DirectView(gp)
        self._mean_sets: list[tuple[np.ndarray, int, str]] = []
        self._cov_blocks: list[tuple[np.ndarray, np.ndarray, int, str]] = []

    @property
    def gp(self) -> GaussianPosterior:
        return self._direct.gp

    def register(self, name: str, X: np.ndarray, channel: int) -> None:
        self.tracker.add_set(name, X, channel)
        self._mean_sets.append((np.asarray(X, dtype=float), int(channel), name))

    def register_cov(self, name: str, a: str, b: str) -> None:
        Xa = cha = Xb = chb = None
        for X, ch, nm in self._mean_sets:
            if nm == a:
                Xa, cha = X, ch
            if nm == b:
                Xb, chb = X, ch
        self.tracker.add_cov_block(name, a, b)
        self._cov_blocks.append((Xa, Xb, cha, name))

    def advance(self, gp: GaussianPosterior) -> None:
        self.tracker.advance(gp)
        self._direct = DirectView(gp)

    def mean_sd(self, X, channel: int):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        for reg, ch, name in self._mean_sets:
            if ch != int(channel) or len(X) < len(reg) or X.shape[1] != reg.shape[1]:
                continue
            if np.array_equal(X[: len(reg)], reg):
                mu, sd = self.tracker.mean_sd(name)
                if len(X) == len(reg):
                    return mu, sd
                mu2, sd2 = self._direct.mean_sd(X[len(reg) :], channel)
                return np.concatenate([mu, mu2]), np.concatenate([sd, sd2])
        return self._direct.mean_sd(X, channel)

    def cov_matrix(self, X, Z, channel: int):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        for Xa, Xb, ch, name in self._cov_blocks:
            if ch != int(channel) or len(Z) != len(Xb) or len(X) < len(Xa):
                continue
            if np.array_equal(Z, Xb) and np.array_equal(X[: len(Xa)], Xa):
                cov = self.tracker.cov_block(name)
                if len(X) == len(Xa):
                    return cov
                extra = self._direct.cov_matrix(X[len(Xa) :], Z, channel)
                return np.vstack([cov, extra])
        return self._direct.cov_matrix(X, Z, channel)

    def cov_pairs(self, X, Z, channel: int):
        return self._direct.cov_pairs(X, Z, channel)


def _resolve_problem(config: RunConfig, seed: int) -> BenchmarkProblem:
    problem = make_problem(config.benchmark, seed)
    if config.kernel_overrides:
        ov = dict(config.kernel_overrides)
        base = problem.kernels.constraint
        kern = KernelSpec(
            lengthscale=ov.get("lengthscale", base.lengthscale),
            outputscale=ov.get("outputscale", base.outputscale),
        )
        problem = _replace_problem(problem, kernels=ChannelKernels.shared(kern))
    if config.noise_var_override is not None:
        nm = NoiseModel.homoskedastic(float(config.noise_var_override))
        problem = _replace_problem(problem, noise_objective=nm, noise_constraint=nm)
    return problem


def _replace_problem(problem: BenchmarkProblem, **kw) -> BenchmarkProblem:
    from dataclasses import replace

    return replace(problem, **kw)


def run_single(config: RunConfig, seed: int) -> RunRecord:
    """One seeded run of the configured strategy on the benchmark."""
    t0 = time.perf_counter()
    problem = _resolve_problem(config, seed)
    d = problem.dim
    box = problem.box
    beta = config.beta or BetaSchedule.constant(problem.default_beta)
    cfg = config.search or SearchConfig.default_for_dim(d)
    N = config.iterations

    gp = GaussianPosterior.prior(problem.kernels, d)
    view = CachedView(gp)
    region = SafeRegion(gp, beta, problem.x0)
    region.set_query(lambda X: view.mean_sd(X, Channel.CONSTRAINT))

    # static candidate sets; registered for incremental updates
    mes_candidates = None
    baseline_candidates = None
    if config.strategy in SELECT_STRATEGIES:
        if config.strategy != "ise_only":
            mes_candidates = sobol_candidates(box, config.mes_candidate_count, seed)
            view.register("mes_cand_f", mes_candidates, Channel.OBJECTIVE)
            view.register("mes_cand_s", mes_candidates, Channel.CONSTRAINT)
        if cfg.mode == "grid":
            res = cfg.grid_resolution or default_grid_resolution(d)
            grid = product_grid(box, res)
            view.register("grid_s", grid, Channel.CONSTRAINT)
            view.register("grid_f", grid, Channel.OBJECTIVE)
            view.register_cov("grid_ss", "grid_s", "grid_s")
    else:
        spec = BaselineSpec(
            kind=config.strategy,
            lipschitz=config.lipschitz,
            grid_resolution=(cfg.grid_resolution or 0),
        )
        if cfg.mode != "line":
            from .baselines import default_candidates

            baseline_candidates = default_candidates(box, spec, seed)
            view.register("bl_f", baseline_candidates, Channel.OBJECTIVE)
            view.register("bl_s", baseline_candidates, Channel.CONSTRAINT)

    noise_rng = np.random.default_rng((seed, 1))
    iter_seeds = np.random.default_rng((seed, 0)).integers(0, 2**31 - 1, size=N)

    xs = np.zeros((N, d))
    comp: list[str] = []
    a_ise = np.full(N, np.nan)
    a_mes = np.full(N, np.nan)
    yf = np.full(N, np.nan)
    ys = np.full(N, np.nan)
    f_true = np.zeros(N)
    s_true = np.zeros(N)
    evaluated: list[np.ndarray] = []
    anchor = problem.x0
    best_obs = -np.inf

    for n in range(N):
        x_starts = np.vstack([problem.x0[None, :]] + [p[None, :] for p in evaluated[-64:]])
        if config.strategy in SELECT_STRATEGIES:
            mode = "ise_bo" if config.strategy == "ise_bo" else (
                "ise_only" if config.strategy == "ise_only" else "theory_combined"
            )
            x, diag = select_next(
                view,
                region,
                mode,
                int(iter_seeds[n]),
                noise_model=problem.noise_constraint,
                box=box,
                search=cfg,
                iteration=n,
                anchor=anchor,
                x_starts=x_starts,
                mes_weight=config.mes_weight,
                phi=config.phi,
                mes_candidates=mes_candidates,
            )
            comp.append(diag["component"])
            a_ise[n] = np.nan if diag["alpha_ise"] is None else diag["alpha_ise"]
            a_mes[n] = np.nan if diag["alpha_mes"] is None else diag["alpha_mes"]
        else:
            if cfg.mode == "line":
                from .search import line_through

                rng_line = np.random.default_rng(int(iter_seeds[n]))
                direction = rng_line.standard_normal(d)
                candidates = line_through(box, anchor, direction, cfg.line_points)
            else:
                candidates = baseline_candidates
            spec = BaselineSpec(
                kind=config.strategy,
                lipschitz=config.lipschitz,
                grid_resolution=(cfg.grid_resolution or 0),
            )
            x, diag = select_baseline(
                spec,
                view,
                region,
                int(iter_seeds[n]),
                box=box,
                iteration=n,
                candidates=candidates,
                extra_candidates=x_starts,
            )
            comp.append(config.strategy)
        if config.strategy != "mes_unconstrained":
            region.certify(x, n)

        xs[n] = x
        f_true[n] = float(problem.objective(x[None, :])[0])
        s_true[n] = float(problem.constraint(x[None, :])[0])
        nv_f = problem.noise_objective.at_point(x)
        nv_s = problem.noise_constraint.at_point(x)
        obs_f = f_true[n] + noise_rng.normal(0.0, np.sqrt(nv_f))
        obs_s = s_true[n] + noise_rng.normal(0.0, np.sqrt(nv_s))
        gp_next = view.gp
        if config.observe_objective:
            yf[n] = obs_f
            gp_next = gp_next.condition(x, Channel.OBJECTIVE, obs_f, nv_f)
        ys[n] = obs_s
        gp_next = gp_next.condition(x, Channel.CONSTRAINT, obs_s, nv_s)
        view.advance(gp_next)
        region.advance(gp_next)

        evaluated.append(x)
        if s_true[n] >= 0.0 and config.observe_objective and obs_f > best_obs:
            best_obs = obs_f
            anchor = x

    regret = simple_regret(f_true, s_true, problem.fstar)
    violation = s_true < 0.0
    return RunRecord(
        benchmark=config.benchmark,
        strategy=config.strategy,
        seed=seed,
        dim=d,
        n=np.arange(1, N + 1),
        x=xs,
        component=comp,
        alpha_ise=a_ise,
        alpha_mes=a_mes,
        yf=yf,
        ys=ys,
        f_true=f_true,
        s_true=s_true,
        violation=violation,
        regret=regret,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class CampaignResult:
    config: RunConfig
    records: list[RunRecord]
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_campaign(config: RunConfig) -> CampaignResult:
    """Run all seeds, collecting per-seed failures without aborting."""
    records: list[RunRecord] = []
    failures: dict[int, str] = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {seed: pool.submit(run_single, config, seed) for seed in config.seeds}
            for seed, fut in futures.items():
                try:
                    records.append(fut.result())
                except Exception as exc:  # per-seed isolation
                    failures[seed] = f"{type(exc).__name__}: {exc}"
    else:
        for seed in config.seeds:
            try:
                records.append(run_single(config, seed))
            except Exception as exc:
                failures[seed] = f"{type(exc).__name__}: {exc}"
                logger.warning("seed %d failed: %s", seed, failures[seed])
    return CampaignResult(config=config, records=records, failures=failures)


def aggregate(records: list[RunRecord]) -> dict:
    """Per-iteration mean/standard-error regret and violation statistics."""
    if not records:
        raise ValueError("no records to aggregate")
    N = records[0].iterations
    if any(r.iterations != N for r in records):
        raise ValueError("records disagree on iteration count")
    R = np.vstack([r.regret for r in records])
    k = len(records)
    with np.errstate(invalid="ignore"):  # unconstrained runs may carry +inf early
        mean = R.mean(axis=0)
        stderr = R.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(N)
    viol = np.array([r.violation.mean() for r in records])
    return {
        "iterations": N,
        "runs": k,
        "regret_mean": mean,
        "regret_stderr": stderr,
        "violation_mean": float(viol.mean()),
        "violation_std": float(viol.std(ddof=1)) if k > 1 else 0.0,
    }


def resolve_output_dir(config: RunConfig) -> Path:
    env = os.environ.get(OUTPUT_DIR_ENV)
    out = env or config.output_dir or "safebo_runs"
    return Path(out)


def write_outputs(result: CampaignResult, out_dir: Path | None = None) -> Path:
    """Write one CSV per (strategy, seed) and a campaign summary JSON."""
    out = out_dir or resolve_output_dir(result.config)
    out.mkdir(parents=True, exist_ok=True)
    for rec in result.records:
        path = out / f"{rec.strategy}_seed{rec.seed}.csv"
        path.write_text(rec.to_csv())
    summary: dict = {
        "benchmark": result.config.benchmark,
        "strategy": result.config.strategy,
        "iterations": result.config.iterations,
        "seeds": list(result.config.seeds),
        "failures": result.failures,
        "records": [r.summary() for r in result.records],
    }
    if result.records:
        agg = aggregate(result.records)
        fr_mean = float(agg["regret_mean"][-1])
        fr_err = float(agg["regret_stderr"][-1])
        summary["aggregate"] = {
            "final_regret_mean": fr_mean if np.isfinite(fr_mean) else None,
            "final_regret_stderr": fr_err if np.isfinite(fr_err) else None,
            "violation_mean": agg["violation_mean"],
            "violation_std": agg["violation_std"],
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out
