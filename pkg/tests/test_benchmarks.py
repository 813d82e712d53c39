import numpy as np
import pytest

from safebo.benchmarks import (
    REGISTRY,
    gp_sample_problem,
    heteroskedastic_problem,
    make_problem,
    pendulum_max_speed,
    pendulum_problem,
    simple_regret,
    synthetic_1d,
)


class TestSynthetic1d:
    def test_seed_value(self):
        p = synthetic_1d()
        expected = 1.0 + 15 * np.exp(-16.0) + 3 * np.exp(-49.0) + 18 * np.exp(-100.0) + 0.41
        assert p.constraint(np.array([[0.0]]))[0] == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(1.41, abs=1e-3)

    def test_reference_optimum_from_scan(self):
        p = synthetic_1d()
        xs = np.linspace(p.box[0, 0], p.box[0, 1], 100_001).reshape(-1, 1)
        vals = p.objective(xs)
        # whole domain is one connected safe interval here
        assert vals.min() > 0
        assert p.fstar == pytest.approx(float(vals.max()), abs=1e-12)

    def test_domain_and_defaults(self):
        p = synthetic_1d()
        assert p.box[0, 0] == -2.4 and p.box[0, 1] == 10.5
        assert p.kernels.constraint.lengthscale == 0.6
        assert p.kernels.constraint.outputscale == 50.0
        assert p.noise_constraint.at_point([1.0]) == 0.05
        assert np.array_equal(p.x0, [0.0])


class TestGpSampleProblem:
    def test_same_function_means_equal_channels(self):
        p = gp_sample_problem(seed=0, same_function=True)
        X = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
        assert np.array_equal(p.objective(X), p.constraint(X))

    def test_fixed_seed_reproducible(self):
        p1 = gp_sample_problem(seed=3)
        p2 = gp_sample_problem(seed=3)
        X = np.random.default_rng(1).uniform(-1, 1, size=(20, 2))
        assert np.array_equal(p1.objective(X), p2.objective(X))
        assert p1.fstar == p2.fstar

    def test_independent_channels_differ(self):
        p = gp_sample_problem(seed=1, same_function=False)
        X = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
        assert not np.allclose(p.objective(X), p.constraint(X))

    def test_safe_seed_and_reference(self):
        for seed in range(5):
            p = gp_sample_problem(seed=seed)
            assert p.constraint(p.x0[None, :])[0] >= 0
            # the reference optimum is at least the value at the seed
            assert p.fstar >= p.objective(p.x0[None, :])[0] - 1e-12


class TestHeteroskedastic:
    def test_origin_value(self):
        p = heteroskedastic_problem(4)
        expected = 0.5 + 2 * np.exp(-7.29) + 6 * np.exp(-36.0) + 0.2
        assert p.objective(np.zeros((1, 4)))[0] == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.7014, abs=1e-4)

    def test_symmetry(self):
        p = heteroskedastic_problem(6)
        X = np.random.default_rng(0).uniform(-8, 8, size=(40, 6))
        assert np.allclose(p.objective(X), p.objective(-X), atol=1e-12)

    def test_noise_switches_on_first_coordinate(self):
        p = heteroskedastic_problem(4)
        assert p.noise_constraint.at_point([-0.1, 0, 0, 0]) == 0.5
        assert p.noise_constraint.at_point([0.1, 0, 0, 0]) == 0.05
        assert p.noise_constraint.at_point([0.0, 0, 0, 0]) == 0.05

    def test_reference_optimum_near_far_bump(self):
        p = heteroskedastic_problem(4)
        x2 = np.zeros((1, 4))
        x2[0, 0] = 6.0
        assert p.fstar >= p.objective(x2)[0] - 1e-9
        assert p.fstar == pytest.approx(3.2, abs=1e-2)

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            heteroskedastic_problem(5)


class TestPendulum:
    def test_uncontrolled_pendulum_falls(self):
        v = pendulum_max_speed(np.array([[0.0, 0.0]]))[0]
        assert 0.5 - v < -3.0  # far beyond the velocity budget

    def test_deterministic_episodes(self):
        g = np.array([[-6.5, -1.75]])
        assert pendulum_max_speed(g)[0] == pendulum_max_speed(g)[0]

    def test_stabilizing_gains_are_safe(self):
        p = pendulum_problem()
        s0 = p.constraint(p.x0[None, :])[0]
        assert s0 >= 0.3  # comfortably inside

    def test_safe_corner_shape_in_wide_scan(self):
        # the stabilizing region needs strong proportional and damping gains
        k1 = np.linspace(-12, 2, 29)
        k2 = np.linspace(-6, 2, 17)
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        pts = np.stack([K1.ravel(), K2.ravel()], -1)
        s = 0.5 - pendulum_max_speed(pts)
        safe = s >= 0
        assert safe.any()
        assert np.all(pts[safe, 0] <= -4.0)
        assert np.all(pts[safe, 1] <= 0.5)
        unsafe_fraction = 1.0 - safe.mean()
        assert 0.2 < unsafe_fraction < 0.8

    def test_problem_box_is_inside_plateau(self):
        p = pendulum_problem()
        from safebo.search import product_grid

        G = product_grid(p.box, 21)
        assert np.all(p.constraint(G) >= 0.3)


class TestRegistry:
    def test_names(self):
        assert set(REGISTRY) == {
            "synthetic1d",
            "gp2d_same",
            "gp2d_indep",
            "hetero4",
            "hetero6",
            "pendulum",
        }

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            make_problem("nope")

    @pytest.mark.parametrize("name", ["synthetic1d", "gp2d_same", "pendulum"])
    def test_safe_seed_invariant(self, name):
        p = make_problem(name, seed=0)
        assert p.constraint(p.x0[None, :])[0] >= 0


class TestSimpleRegret:
    def test_immediate_optimum(self):
        r = simple_regret(np.array([5.0, 1.0, 2.0]), np.zeros(3), fstar=5.0)
        assert np.array_equal(r, [0.0, 0.0, 0.0])

    def test_plateau_when_no_new_best(self):
        r = simple_regret(np.array([1.0, 0.5, 0.9]), np.zeros(3), fstar=2.0)
        assert np.array_equal(r, [1.0, 1.0, 1.0])

    def test_non_increasing_and_recomputable(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=50)
        s = rng.normal(size=50)
        r = simple_regret(f, s, fstar=3.0)
        assert np.all(np.diff(r) <= 0)
        best = -np.inf
        for i in range(50):
            if s[i] >= 0:
                best = max(best, f[i])
            assert r[i] == 3.0 - best

    def test_unsafe_evaluations_do_not_count(self):
        r = simple_regret(np.array([10.0, 1.0]), np.array([-1.0, 0.0]), fstar=5.0)
        assert np.isinf(r[0])
        assert r[1] == 4.0

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            simple_regret(np.array([]), np.array([]), 0.0)
