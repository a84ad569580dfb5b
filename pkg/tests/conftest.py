from __future__ import annotations

import numpy as np
import pytest

from dosebridge.animal_prior import (
    beta_pseudo_priors,
    dog_example_study,
    dog_reference_prior,
    percentile_targets,
    weakly_informative_prior,
)
from dosebridge.dose_model import reference_grid
from dosebridge.inference import MixtureWorkspace, QuadratureSettings
from dosebridge.trial_engine import TrialConfig

REF_PRIOR_MEANS = (0.033, 0.069, 0.137, 0.252, 0.322, 0.382, 0.476, 0.557, 0.625)
REF_PRIOR_SDS = (0.022, 0.041, 0.070, 0.102, 0.115, 0.121, 0.125, 0.121, 0.114)
REF_PRIOR_ESS = (63.4, 36.7, 23.3, 17.0, 15.6, 15.0, 15.0, 15.8, 17.0)


@pytest.fixture(scope="session")
def grid():
    return reference_grid()


@pytest.fixture(scope="session")
def dog_study():
    return dog_example_study()


@pytest.fixture(scope="session")
def dog_pseudo(dog_study):
    return beta_pseudo_priors(dog_study)


@pytest.fixture(scope="session")
def dog_targets(grid, dog_study):
    # ~30 s of quadrature; shared across the whole session
    return percentile_targets(dog_study, grid)


@pytest.fixture(scope="session")
def reference_prior():
    return dog_reference_prior()


@pytest.fixture(scope="session")
def trial_workspace(grid, reference_prior):
    """Inference workspace of the worked example (informative spread doubled)."""
    return MixtureWorkspace(
        reference_prior.inflated(2.0),
        weakly_informative_prior(grid),
        grid,
        QuadratureSettings(),
    )


@pytest.fixture()
def example_config(grid):
    return TrialConfig(
        grid=grid,
        cohort_size=3,
        max_cohorts=11,
        start_dose=4.0,
        u01=0.6,
        lambda_mode="sd_ratio",
        weight_policy="dynamic",
        seed=42,
    )


def importance_sample_posterior(prior, grid, counts, n_draws, seed):
    """Self-normalised importance sampling oracle for one component posterior.

    Proposal = the prior itself; returns weighted means and standard errors
    for (theta1, theta2) and the per-dose risks.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(prior.cov)
    z = rng.standard_normal((2, n_draws))
    theta = chol @ z + prior.mu[:, None]
    t1, t2 = theta
    doses = np.asarray(grid.doses)
    loglik = np.zeros(n_draws)
    for dose_idx, n, r in counts:
        lin = t1 + np.exp(t2) * np.log(doses[dose_idx] / grid.d_ref)
        loglik += r * (-np.logaddexp(0.0, -lin)) + (n - r) * (-np.logaddexp(0.0, lin))
    w = np.exp(loglik - loglik.max())
    w /= w.sum()
    ess = 1.0 / np.sum(w**2)

    def mean_se(values):
        m = float(w @ values)
        var = float(w @ (values - m) ** 2)
        return m, np.sqrt(var / ess)

    stats = {"theta1": mean_se(t1), "theta2": mean_se(t2), "ess": ess}
    risks = []
    for d in doses:
        lin = t1 + np.exp(t2) * np.log(d / grid.d_ref)
        risks.append(mean_se(1.0 / (1.0 + np.exp(-lin))))
    stats["risks"] = risks
    return stats
