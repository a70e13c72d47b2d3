"""Laplace exponents, their samplers and the regime table."""
# %%
import numpy as np

from gasketlab.gasket import D_W
from gasketlab.rng import stream
from gasketlab.subordinators import PRESETS, parse_exponent, tail_bound

for spec in ("pure_drift:b=1", "stable_drift:b=1,g=0.5dw", "stable:g=0.5dw", "relativistic:a=1,th=1"):
    phi = parse_exponent(spec)
    print(f"{spec:28s} phi(1)={float(phi(1.0)):.4f} beta={phi.beta} regime={phi.regime}")

# %% the sampler reproduces E exp(-lam S_t) = exp(-t phi(lam))
phi = parse_exponent("stable:g=0.5dw")
S = phi.sample(stream(0, "demo"), 1.0, 100000)
for lam in (0.5, 1, 2):
    print(f"lam={lam}: MC {np.exp(-lam * S).mean():.4f} exact {np.exp(-float(phi(lam))):.4f}")

# %% tail probability against its closed-form bound
print("P(S_1 > 100) =", np.mean(S > 100), "bound", round(tail_bound(phi, 1.0, 100.0), 5))
print("presets:", sorted(PRESETS))
