"""Conduct two hypothetical trials that collide with the animal prior.

Trial one: humans are more sensitive than the dogs suggested (a DLT appears
at 4 mg/m^2 immediately, and 8 mg/m^2 turns out highly toxic).  Trial two:
humans tolerate far more than predicted (clean cohorts all the way up).
Watch the mixture weight react: it collapses after contradicted predictions
and recovers after confirmed ones.
"""

from dosebridge import DoseEscalationTrial, TrialConfig, dog_reference_prior, reference_grid

grid = reference_grid()
config = TrialConfig(
    grid=grid,
    cohort_size=3,
    max_cohorts=11,
    start_dose=4.0,
    u01=0.6,
    lambda_mode="sd_ratio",
    weight_policy="dynamic",
    seed=42,
)


def conduct(name, recorded):
    print(f"\n=== {name} ===")
    trial = DoseEscalationTrial(config, dog_reference_prior())
    print(f"{'h':>2} {'given':>6} {'DLTs':>4} {'kappa':>6} {'lambda':>7} {'weight':>7} {'w_post':>7} {'next':>6}")
    for dose_index, outcomes in recorded:
        point = trial.record_cohort(dose_index, outcomes, allow_deviation=True)
        rec = trial.recommend_next() if trial.status == "enrolling" else None
        nxt = f"{grid.doses[rec]:g}" if rec is not None and rec >= 0 else trial.status
        print(f"{point.cohort:2d} {grid.doses[dose_index]:6g} {sum(outcomes):4d} "
              f"{point.kappa:6.3f} {point.lam:7.3f} {point.weight:7.3f} "
              f"{point.posterior_weight:7.3f} {nxt:>6}")
    return trial


# humans more sensitive than predicted: weight crashes to ~0.08 by cohort 4
conduct(
    "under-predicted toxicity",
    [(1, (1, 0, 0)), (0, (0, 0, 0)), (1, (0, 0, 0)), (2, (1, 1, 1))],
)

# humans far more tolerant: wrong DLT predictions at 22 and 28 cut the weight
# to ~0.53 then ~0.25, freeing the trial to escalate to 54
trial = conduct(
    "over-predicted toxicity",
    [(1, (0, 0, 0)), (2, (0, 0, 0)), (3, (0, 0, 0)), (4, (0, 0, 0)), (5, (0, 0, 0))],
)
rec = trial.recommend_next()
print(f"\nAfter five clean cohorts the engine now recommends {grid.doses[rec]:g} mg/m^2 "
      f"(reduced borrowing lets the trial escalate past the animal prior's ceiling).")
