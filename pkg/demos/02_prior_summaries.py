"""Pre-trial summaries: effective sample sizes, interval probabilities, predictions.

Assembles the trial's two-component prior (the frozen dog-informed component
with its location-hyperprior spread doubling, plus the weakly-informative
component), then prints the decision quantities a trial team reviews before
dosing anyone: per-dose prior means/ESS, underdose/target/overdose interval
probabilities, the overdose-control compliant set, the default starting dose,
and the frozen outcome predictions for two utility settings.
"""

from dosebridge import (
    UtilityTable,
    dog_reference_prior,
    ess_moment_match,
    reference_grid,
    summarize,
    weakly_informative_prior,
)
from dosebridge.commensurability import predictions_for_grid
from dosebridge.inference import MixtureWorkspace, implied_risk_moments, mixture_prob_below

grid = reference_grid()
informative = dog_reference_prior().inflated(2.0)  # location hyperprior doubles the spread
weak = weakly_informative_prior(grid)

means, sds = implied_risk_moments(informative, grid)
print("Prior DLT-risk summaries implied by the animal-informed component:")
print(f"{'dose':>6} {'mean':>7} {'sd':>7} {'a':>6} {'b':>6} {'ESS':>6}")
for d, m, s in zip(grid.doses, means, sds):
    a, b, ess = ess_moment_match(m, s)
    print(f"{d:6g} {m:7.3f} {s:7.3f} {a:6.1f} {b:6.1f} {ess:6.1f}")

ws = MixtureWorkspace(informative, weak, grid)
prior_only = ws.posterior(1.0, ())
s = summarize(prior_only, grid)

print("\nInterval probabilities under the animal prior (w = 1):")
print(f"{'dose':>6} {'P(under)':>9} {'P(target)':>10} {'P(over)':>8} {'median':>8}")
for i, d in enumerate(grid.doses):
    print(f"{d:6g} {s.prob_underdose[i]:9.3f} {s.prob_target[i]:10.3f} "
          f"{s.prob_overdose[i]:8.3f} {s.median_risk[i]:8.3f}")

compliant = [d for d, po in zip(grid.doses, s.prob_overdose) if po <= 0.25]
print(f"\nOverdose-control compliant set before any human data: up to {max(compliant):g} mg/m^2")

p_safe = mixture_prob_below(prior_only, 0.1)
print(f"Pr(risk < 0.1) at 4 mg/m^2 = {p_safe[1]:.3f} -> a comfortable starting dose")

for u01 in (0.6, 0.2):
    preds = predictions_for_grid(s.prob_dlt, UtilityTable(u01=u01))
    marks = ["DLT" if x else "no-DLT" for x in preds]
    print(f"\nFrozen outcome predictions with u01={u01} "
          f"(threshold {UtilityTable(u01=u01).prediction_threshold:.3f}):")
    for d, mk in zip(grid.doses, marks):
        print(f"  {d:6g} mg/m^2: {mk}")
