import numpy as np
import pytest

from safebo.gp import Channel, ChannelKernels, GaussianPosterior, KernelSpec


@pytest.fixture
def unit_kernel():
    return KernelSpec(lengthscale=0.3, outputscale=1.0)


@pytest.fixture
def prior_gp(unit_kernel):
    return GaussianPosterior.prior(ChannelKernels.shared(unit_kernel), 1)


def random_posterior(seed, n_obs, dim=1, lengthscale=0.4, outputscale=1.0, noise_var=0.05):
    """A constraint-channel posterior conditioned on GP-sampled data."""
    rng = np.random.default_rng(seed)
    kern = KernelSpec(lengthscale=lengthscale, outputscale=outputscale)
    gp = GaussianPosterior.prior(ChannelKernels.shared(kern), dim)
    X = rng.uniform(-1.0, 1.0, size=(n_obs, dim))
    for i in range(n_obs):
        mean, var = gp.mean_var(X[i : i + 1], Channel.CONSTRAINT)
        y = rng.normal(mean[0], np.sqrt(max(var[0], 0.0) + noise_var))
        gp = gp.condition(X[i], Channel.CONSTRAINT, y, noise_var)
        if i % 2 == 0:
            mean, var = gp.mean_var(X[i : i + 1], Channel.OBJECTIVE)
            yf = rng.normal(mean[0], np.sqrt(max(var[0], 0.0) + noise_var))
            gp = gp.condition(X[i], Channel.OBJECTIVE, yf, noise_var)
    return gp
