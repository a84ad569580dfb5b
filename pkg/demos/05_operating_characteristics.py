"""A compact operating-characteristics study (two scenarios, all procedures).

Runs 200 replicates per cell so it finishes in about a minute; the full
8-scenario x 5-procedure study at 1000 replicates is what the CLI runs:

    dosebridge simulate --reps 1000 --seed 2024 --out reports/

Procedures: A dynamic weights, B dynamic + run-in, C fixed weight 0.5,
D always-informative, E always-weak.
"""

import numpy as np

from dosebridge import TrialConfig, dog_reference_prior, procedure, reference_grid, run_study, scenario_table
from dosebridge.sim_harness import write_reports

grid = reference_grid()
config = TrialConfig(grid=grid, cohort_size=3, max_cohorts=7, start_dose=4.0, u01=0.6)
scenarios = [scenario_table()[2], scenario_table()[7]]  # consistency & drug-is-safe
procedures = [procedure(p) for p in "ABCDE"]

oc = run_study(scenarios, procedures, config, dog_reference_prior(),
               n_replicates=200, master_seed=2024)
print(f"study finished in {oc.elapsed_seconds:.1f}s\n")

for s in scenarios:
    print(f"--- {s.name} (true MTD {grid.doses[s.mtd_index]:g} mg/m^2) ---")
    print(f"{'proc':>4} {'PCS%':>6} {'stopped%':>9}  selection% per dose")
    for pid in oc.procedure_ids:
        cell = oc.cell(s.name, pid)
        print(f"{pid:>4} {oc.pcs(s, pid):6.1f} {cell.pct_stopped_early:9.1f}  "
              f"{np.round(cell.pct_selecting, 1)}")
    print()

paths = write_reports(oc, "oc_demo_reports")
print("reports written:", ", ".join(paths.values()))
