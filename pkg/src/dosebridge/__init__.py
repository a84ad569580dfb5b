"""Animal-data-informed Bayesian dose escalation with dynamic mixture weights.

The package turns single-species animal toxicity data into an informative
bivariate-normal prior for a two-parameter logistic dose-toxicity model,
conducts phase I escalation with a robust two-component mixture prior whose
informative weight is chosen each cohort by a decision-theoretic
commensurability measure, and reproduces the method's operating
characteristics in simulation.
"""

from .animal_prior import (
    AnimalStudy,
    BvnParams,
    PercentileTable,
    allometric_scale,
    beta_pseudo_priors,
    dog_example_study,
    dog_reference_prior,
    fit_animal_prior,
    fit_bvn,
    implied_percentile,
    joint_density,
    load_prior_record,
    marginal_density,
    marginal_percentile,
    percentile_targets,
    save_prior_record,
    weakly_informative_prior,
)
from .commensurability import (
    UtilityTable,
    dynamic_weight,
    interesting_doses,
    kappa,
    lambda_info_time,
    lambda_sd_ratio,
    optimal_prediction,
)
from .dose_model import (
    CohortOutcome,
    DoseGrid,
    Scenario,
    ThetaPoint,
    dlt_risk,
    reference_grid,
    scenario_table,
)
from .inference import (
    MixtureBelief,
    MixtureWorkspace,
    PosteriorSummary,
    QuadratureSettings,
    ess_moment_match,
    summarize,
)
from .sim_harness import OperatingCharacteristics, procedure, run_study, simulate_trial, write_reports
from .trial_engine import DoseEscalationTrial, TrialConfig, state_hash

__version__ = "0.1.0"
