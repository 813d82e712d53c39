import numpy as np
import pytest

from safebo.gp import Channel, ChannelKernels, GaussianPosterior, KernelSpec
from safebo.safety import (
    BetaSchedule,
    CertificationError,
    ConfigError,
    SafeRegion,
    safe_violation_check,
)
from safebo.benchmarks import synthetic_1d


@pytest.fixture
def region(prior_gp):
    return SafeRegion(prior_gp, BetaSchedule.constant(2.0), x0=[0.0])


class TestBetaSchedule:
    def test_constant(self):
        beta = BetaSchedule.constant(2.0)
        assert all(beta(n) == 2.0 for n in range(100))

    def test_theoretical_value(self):
        beta = BetaSchedule.theoretical(B=2.0, R=1.0, delta=0.1, gamma=lambda n: 5.0)
        expected = 2.0 + np.sqrt(2.0 * (np.log(np.e / 0.1) + 5.0))
        assert beta(3) == pytest.approx(expected, abs=1e-12)
        assert beta(3) == pytest.approx(6.076, abs=2e-3)

    def test_nondecreasing_with_growing_gamma(self):
        beta = BetaSchedule.theoretical(B=1.0, R=1.0, delta=0.05, gamma=lambda n: np.log1p(n))
        vals = [beta(n) for n in range(1, 101)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_delta_validation(self):
        with pytest.raises(ConfigError):
            BetaSchedule.theoretical(B=1.0, R=1.0, delta=1.5, gamma=lambda n: 0.0)
        with pytest.raises(ConfigError):
            BetaSchedule.constant(-1.0)

    def test_gamma_as_sequence(self):
        beta = BetaSchedule.theoretical(B=0.0, R=1.0, delta=0.5, gamma=[0.0, 1.0, 2.0])
        assert beta(1) < beta(2)


class TestMembership:
    def test_fresh_region_rejects_everything_but_seed(self, region):
        assert region.is_safe([0.0], 0)  # the seed
        for x in np.linspace(-1, 1, 13):
            if x != 0.0:
                assert not region.is_safe([x], 0)

    def test_seed_always_member(self, region, prior_gp):
        gp = prior_gp.condition([0.0], Channel.CONSTRAINT, -5.0, 0.01)
        region.advance(gp)
        assert region.is_safe([0.0], 5)

    def test_conditioning_high_value_certifies(self, region, prior_gp):
        gp = prior_gp
        for _ in range(3):
            gp = gp.condition([0.5], Channel.CONSTRAINT, 5.0, 1e-4)
        region.advance(gp)
        # oracle: lcb = mu - beta * sd computed directly
        mean, var = gp.mean_var(np.array([[0.5]]), Channel.CONSTRAINT)
        assert mean[0] - 2.0 * np.sqrt(var[0]) >= 0
        assert region.is_safe([0.5], 1)

    def test_lcb_mask_matches_pointwise(self, region, prior_gp):
        gp = prior_gp.condition([0.3], Channel.CONSTRAINT, 4.0, 0.01)
        region.advance(gp)
        X = np.linspace(-1, 1, 21).reshape(-1, 1)
        mask = region.is_safe_mask(X, 2)
        for i, x in enumerate(X):
            assert mask[i] == region.is_safe(x, 2)


class TestCertification:
    def test_certify_then_always_member(self, region, prior_gp):
        gp = prior_gp
        for _ in range(3):
            gp = gp.condition([0.5], Channel.CONSTRAINT, 5.0, 1e-4)
        region.advance(gp)
        region.certify([0.5], 1)
        # later evidence drags the bound below zero; archive wins
        gp2 = gp
        for _ in range(5):
            gp2 = gp2.condition([0.5], Channel.CONSTRAINT, -6.0, 1e-4)
        region.advance(gp2)
        assert region.lcb(np.array([[0.5]]), 6)[0] < 0
        assert region.is_safe([0.5], 6)

    def test_certify_contract_violation(self, region):
        with pytest.raises(CertificationError):
            region.certify([0.9], 0)

    def test_archive_monotone_over_run(self, region, prior_gp):
        rng = np.random.default_rng(0)
        gp = prior_gp
        sizes = []
        for n in range(50):
            x = rng.uniform(-1, 1, size=1)
            gp = gp.condition(x, Channel.CONSTRAINT, 3.0 + rng.normal(0, 0.1), 0.05)
            region.advance(gp)
            mask = region.is_safe_mask(x[None, :], n, certify=True)
            sizes.append(region.archive_size)
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))


class TestViolationCheck:
    def test_boundary_is_not_violation(self):
        class P:
            def constraint(self, X):
                return np.zeros(len(X))

        assert safe_violation_check(P(), [0.1]) is False

    def test_negative_is_violation(self):
        class P:
            def constraint(self, X):
                return np.full(len(X), -0.1)

        assert safe_violation_check(P(), [0.1]) is True

    def test_synthetic_seed_is_safe(self):
        problem = synthetic_1d()
        assert safe_violation_check(problem, problem.x0) is False
