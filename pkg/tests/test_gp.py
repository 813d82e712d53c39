import numpy as np
import pytest

from safebo.gp import (
    Channel,
    ChannelKernels,
    Dataset,
    DegenerateCorrelationError,
    ExtendedPoint,
    FactorizationError,
    GaussianPosterior,
    KernelSpec,
    NoiseModel,
    PosteriorQueryCache,
    posterior_mean_var,
    sample_prior_function,
    sample_prior_grid2d,
)

from conftest import random_posterior


def ep(x, ch=Channel.CONSTRAINT):
    return ExtendedPoint((x,) if np.isscalar(x) else tuple(x), ch)


class TestPosteriorBasics:
    def test_prior_is_zero_mean_unit_variance(self, prior_gp):
        mean, var = posterior_mean_var(prior_gp, ep(0.37))
        assert mean == 0.0
        assert var == pytest.approx(1.0)

    def test_scalar_conditioning_formula(self, prior_gp):
        gp = prior_gp.condition([0.0], Channel.CONSTRAINT, 1.0, 0.05)
        mean, var = posterior_mean_var(gp, ep(0.0))
        # k (K + nv)^-1 y with k = K = 1
        assert mean == pytest.approx(1.0 / 1.05, abs=1e-12)
        assert var == pytest.approx(1.0 - 1.0 / 1.05, abs=1e-12)

    def test_far_point_unchanged(self, prior_gp):
        gp = prior_gp.condition([0.0], Channel.CONSTRAINT, 3.0, 0.05)
        mean, var = posterior_mean_var(gp, ep(50.0))
        assert abs(mean) < 1e-10
        assert abs(var - 1.0) < 1e-10

    def test_variance_decreases_on_repeat_observation(self, prior_gp):
        gp1 = prior_gp.condition([0.2], Channel.CONSTRAINT, 0.5, 0.1)
        _, v1 = posterior_mean_var(gp1, ep(0.2))
        gp2 = gp1.condition([0.2], Channel.CONSTRAINT, 0.5, 0.1)
        _, v2 = posterior_mean_var(gp2, ep(0.2))
        assert v2 < v1

    def test_incremental_matches_batch(self):
        rng = np.random.default_rng(7)
        kern = KernelSpec(lengthscale=0.5, outputscale=2.0)
        gp = GaussianPosterior.prior(ChannelKernels.shared(kern), 2)
        data = Dataset.empty(2)
        for _ in range(20):
            x = rng.uniform(-1, 1, size=2)
            ch = int(rng.integers(0, 2))
            y = float(rng.normal())
            gp = gp.condition(x, ch, y, 0.05)
            data = data.append(x, ch, y, 0.05)
        batch = GaussianPosterior.from_dataset(ChannelKernels.shared(kern), 2, data)
        probes = rng.uniform(-1, 1, size=(40, 2))
        for ch in (Channel.OBJECTIVE, Channel.CONSTRAINT):
            m1, v1 = gp.mean_var(probes, ch)
            m2, v2 = batch.mean_var(probes, ch)
            assert np.max(np.abs(m1 - m2)) <= 1e-8
            assert np.max(np.abs(v1 - v2)) <= 1e-8

    def test_variance_bounds_and_monotonicity(self):
        gp = random_posterior(3, 0)
        probes = np.linspace(-1, 1, 31).reshape(-1, 1)
        prev_var = None
        rng = np.random.default_rng(11)
        for i in range(12):
            _, var = gp.mean_var(probes, Channel.CONSTRAINT)
            assert np.all(var >= 0.0)
            assert np.all(var <= 1.0 + 1e-9)
            if prev_var is not None:
                assert np.all(var <= prev_var + 1e-9)
            prev_var = var
            x = rng.uniform(-1, 1, size=1)
            gp = gp.condition(x, Channel.CONSTRAINT, float(rng.normal()), 0.05)

    def test_channel_block_independence_is_exact(self, prior_gp):
        gp = prior_gp.condition([0.1], Channel.OBJECTIVE, 2.0, 0.01)
        gp = gp.condition([0.4], Channel.OBJECTIVE, -1.0, 0.01)
        probes = np.linspace(-1, 1, 17).reshape(-1, 1)
        mean, var = gp.mean_var(probes, Channel.CONSTRAINT)
        assert np.all(mean == 0.0)
        assert np.all(var == 1.0)


class TestCorrelation:
    def test_self_correlation(self, prior_gp):
        gp = prior_gp.condition([0.5], Channel.CONSTRAINT, 1.0, 0.1)
        assert gp.correlation(ep(0.0), ep(0.0)) == 1.0

    def test_prior_independence_far_apart(self, prior_gp):
        rho = prior_gp.correlation(ep(-20.0), ep(20.0))
        assert rho == pytest.approx(0.0, abs=1e-12)

    def test_prior_correlation_at_one_lengthscale(self, prior_gp):
        rho = prior_gp.correlation(ep(0.0), ep(0.3))
        assert rho == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_degenerate_point_raises(self, prior_gp):
        gp = prior_gp
        for _ in range(60):
            gp = gp.condition([0.0], Channel.CONSTRAINT, 0.0, 1e-9)
        _, var = gp.mean_var(np.array([[0.0]]), Channel.CONSTRAINT)
        assert var[0] < 1e-9  # collapsed far below the prior scale
        with pytest.raises(DegenerateCorrelationError):
            gp.correlation(ep(0.0), ep(0.5), tol=1e-4)

    def test_correlation_bounded(self):
        gp = random_posterior(5, 14)
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b = rng.uniform(-1, 1, size=2)
            rho = gp.correlation(ep(a), ep(b))
            assert -1.0 <= rho <= 1.0


class TestNoiseCorrelationFactor:
    def test_known_point_gives_zero(self, prior_gp):
        gp = prior_gp
        for _ in range(40):
            gp = gp.condition([0.0], Channel.CONSTRAINT, 1.0, 1e-8)
        rho2 = gp.noise_correlation_factor(ep(0.0), 0.05)
        assert rho2 == pytest.approx(0.0, abs=1e-5)

    def test_equal_variances_give_half(self, prior_gp):
        assert prior_gp.noise_correlation_factor(ep(0.0), 1.0) == pytest.approx(0.5)

    def test_prior_ratio(self, prior_gp):
        assert prior_gp.noise_correlation_factor(ep(0.0), 0.05) == pytest.approx(1.0 / 1.05)


class TestPriorSampling:
    def test_duplicate_points_get_identical_values(self, unit_kernel):
        grid = np.array([[0.1], [0.5], [0.1]])
        v = sample_prior_function(unit_kernel, grid, seed=4)
        assert v[0] == v[2]

    def test_seed_determinism(self, unit_kernel):
        grid = np.linspace(-1, 1, 9).reshape(-1, 1)
        a = sample_prior_function(unit_kernel, grid, seed=123)
        b = sample_prior_function(unit_kernel, grid, seed=123)
        assert np.array_equal(a, b)

    def test_monte_carlo_covariance(self, unit_kernel):
        grid = np.array([[0.0], [0.2]])
        draws = np.array([sample_prior_function(unit_kernel, grid, seed=s) for s in range(2000)])
        emp = np.cov(draws.T, ddof=1)
        expected = unit_kernel.gram(grid, grid)
        assert np.all(np.abs(emp - expected) / np.abs(expected) < 0.05 + 1e-12)

    def test_grid2d_matches_direct_sampling_covariance(self):
        kern = KernelSpec(lengthscale=(0.4, 0.7), outputscale=2.0)
        ax = np.linspace(-1, 1, 4)
        ay = np.linspace(-1, 1, 3)
        draws = np.array(
            [sample_prior_grid2d(kern, ax, ay, seed=s).ravel() for s in range(4000)]
        )
        pts = np.stack(np.meshgrid(ax, ay, indexing="ij"), -1).reshape(-1, 2)
        expected = kern.gram(pts, pts)
        emp = np.cov(draws.T, ddof=1)
        assert np.max(np.abs(emp - expected)) < 0.25  # 4000 draws, scale 2.0


class TestErrorsAndTypes:
    def test_factorization_error_names_jitter(self):
        kern = KernelSpec(lengthscale=1.0, outputscale=1.0)
        grid = np.zeros((40, 1))  # deduped to one point, so force via Dataset
        gp = GaussianPosterior.prior(ChannelKernels.shared(kern), 1)
        data = Dataset.empty(1)
        for _ in range(3):
            data = data.append([0.0], Channel.CONSTRAINT, 0.0, 1e-300)
        # near-zero noise with duplicated points is numerically singular
        try:
            GaussianPosterior.from_dataset(ChannelKernels.shared(kern), 1, data)
        except FactorizationError as e:
            assert "jitter" in str(e)

    def test_extended_point_validation(self):
        p = ExtendedPoint((0.5, 1.5), Channel.OBJECTIVE)
        assert p.array.shape == (2,)
        with pytest.raises(ValueError):
            ExtendedPoint((0.0,), 3)

    def test_noise_model_validation(self):
        with pytest.raises(ValueError):
            NoiseModel.homoskedastic(0.0)
        nm = NoiseModel.heteroskedastic(lambda X: np.where(X[:, 0] >= 0, 0.05, 0.5))
        assert nm.at_point([0.3]) == 0.05
        assert nm.at_point([-0.3]) == 0.5

    def test_dataset_indexing(self):
        data = Dataset.empty(1).append([0.5], Channel.OBJECTIVE, 1.5, 0.1)
        p, y, nv = data[0]
        assert p.channel == Channel.OBJECTIVE
        assert y == 1.5 and nv == 0.1
        assert len(data) == 1


class TestQueryCache:
    def test_cache_matches_direct_queries(self):
        kern = KernelSpec(lengthscale=0.4, outputscale=1.5)
        gp = GaussianPosterior.prior(ChannelKernels.shared(kern), 1)
        grid = np.linspace(-1, 1, 25).reshape(-1, 1)
        cache = PosteriorQueryCache(gp)
        cache.add_set("g", grid, Channel.CONSTRAINT)
        cache.add_cov_block("gg", "g", "g")
        rng = np.random.default_rng(0)
        for i in range(15):
            x = rng.uniform(-1, 1, size=1)
            gp = gp.condition(x, Channel.CONSTRAINT, float(rng.normal()), 0.05)
            if i % 3 == 0:
                gp = gp.condition(x, Channel.OBJECTIVE, float(rng.normal()), 0.05)
            cache.advance(gp)
        mu_c, sd_c = cache.mean_sd("g")
        mu_d, var_d = gp.mean_var(grid, Channel.CONSTRAINT)
        assert np.max(np.abs(mu_c - mu_d)) < 1e-8
        assert np.max(np.abs(sd_c - np.sqrt(var_d))) < 1e-8
        cov_c = cache.cov_block("gg")
        cov_d = gp.cov(grid, Channel.CONSTRAINT, grid, Channel.CONSTRAINT)
        assert np.max(np.abs(cov_c - cov_d)) < 1e-8
