"""A small Monte Carlo study: bias and model selection under skewed effects.

Generates replicates under a skew-normal subject effect (sigma_s2 = 3,
lambda = 4), fits both the skew-effect model and the all-normal baseline to
each, and aggregates estimates, standard errors and absolute bias.  The
headline effect: the normal fit badly underestimates the subject variance
while the skew fit recovers it, and AIC prefers the skew model nearly
always.  The full study uses 200 replicates; ten keep this demo quick.
"""

from sncross import Scenario
from sncross.simulate import SimConfig, run_monte_carlo

config = SimConfig(
    scenario=Scenario.EFFECT_SN,
    n_per_seq=30,
    replicates=10,
    seed=20260808,
)
summary = run_monte_carlo(config)

print(f"replicates converged: {summary.replicates_converged}/{summary.replicates_requested}")
if summary.failed_replicates:
    print(f"excluded (non-converged): {summary.failed_replicates}")
print(f"AIC selects the skew model in {100 * summary.sn_selected_rate:.0f}% of replicates\n")

truth = list(config.true_theta.beta) + [0.72, 3.0, 4.0]
print(f"{'parameter':<12}{'true':>7}{'sn est':>9}{'sn se':>8}{'|bias|':>8}"
      f"{'norm est':>10}{'norm se':>9}")
norm_idx = {n: i for i, n in enumerate(summary.normal.names)}
for i, name in enumerate(summary.sn.names):
    row = f"{name:<12}{truth[i]:>7.2f}{summary.sn.mean_estimate[i]:>9.4f}"
    row += f"{summary.sn.mean_se[i]:>8.4f}{summary.sn.mean_abs_bias[i]:>8.4f}"
    if name in norm_idx:
        j = norm_idx[name]
        row += f"{summary.normal.mean_estimate[j]:>10.4f}{summary.normal.mean_se[j]:>9.4f}"
    else:
        row += f"{'-':>10}{'-':>9}"
    print(row)

print("\nnote the sigma_s2 row: the normal fit sees only the centered variance"
      "\nof the skewed effect, not its scale parameter.")
