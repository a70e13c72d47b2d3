"""Annealed survival of the subordinate walk among obstacles, by Monte Carlo."""
# %%
from gasketlab.gasket import D_W
from gasketlab.montecarlo import survival_bound_check
from gasketlab.potentials import indicator
from gasketlab.subordinators import StableWithDrift

rows = survival_bound_check(StableWithDrift(0.0, D_W / 2), indicator(4.0, 0.25), 1.0, 1, 2,
                            [4.0, 8.0, 16.0], 2000, seed=0)
for r in rows:
    # estimator A integrates the cloud out exactly, B samples it
    print(f"t={r['t']:5.1f}  lower {r['lower_rhs']:.2e}  A {r['A']:.4f}+-{r['se_A']:.4f}"
          f"  B {r['B']:.4f}+-{r['se_B']:.4f}  upper {r['upper_rhs']:.4f}")
