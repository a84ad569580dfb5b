"""The run-in variant: ignore the animal prior until it is first contradicted.

The unconstrained procedure starts at full weight on the animal component,
which is uncomfortable when early agreement merely reflects very safe
starting doses.  The run-in variant conducts the trial on the
weakly-informative prior (weight 0) until the first prediction/observation
discrepancy, then switches to dynamic weighting of all accumulated data.
"""

from dosebridge import DoseEscalationTrial, TrialConfig, dog_reference_prior, reference_grid

grid = reference_grid()
base = dict(grid=grid, cohort_size=3, max_cohorts=11, start_dose=4.0, u01=0.6,
            lambda_mode="sd_ratio", seed=42)

outcomes_by_dose = {
    # humans tolerate everything below 54; the first DLTs appear at the top
    0: (0, 0, 0), 1: (0, 0, 0), 2: (0, 0, 0), 3: (0, 0, 0),
    4: (0, 0, 0), 5: (0, 0, 0), 6: (0, 0, 0), 7: (1, 0, 0), 8: (1, 1, 0),
}

for run_in in (False, True):
    config = TrialConfig(weight_policy="dynamic", run_in=run_in, **base)
    trial = DoseEscalationTrial(config, dog_reference_prior())
    print(f"\n=== run_in={run_in} ===")
    print(f"{'h':>2} {'given':>6} {'DLTs':>4} {'weight':>7} {'gate':>7} {'next':>6}")
    while trial.status == "enrolling":
        rec = trial.recommend_next()
        point = trial.record_cohort(rec, outcomes_by_dose[rec])
        nxt = trial.recommend_next() if trial.status == "enrolling" else trial.status
        nxt = f"{grid.doses[nxt]:g}" if isinstance(nxt, int) and nxt >= 0 else nxt
        gate = "run-in" if point.run_in else "dynamic"
        print(f"{point.cohort:2d} {grid.doses[rec]:6g} {sum(outcomes_by_dose[rec]):4d} "
              f"{point.weight:7.3f} {gate:>7} {nxt:>6}")
    mtd = trial.select_mtd()
    print(f"selected MTD: {'none' if mtd is None else f'{grid.doses[mtd]:g} mg/m^2'}")
