"""Poisson clouds, interaction profiles and the annealed weight."""
# %%
import numpy as np

from gasketlab.gasket import GasketGraph
from gasketlab.potentials import annealed_fk_weight, parse_profile, potential, sample_cloud, s_w, r_w
from gasketlab.rng import stream

g = GasketGraph(1, 3)
cloud = sample_cloud(g, 2.0, stream(1, "cloud"))
print(len(cloud), "points; first words:", cloud.words()[:3])

for spec in ("indicator:A=4,a0=0.25", "polynomial:K=1,theta=0.9,core=0.25"):
    prof = parse_profile(spec)
    V = potential(g, prof, cloud)
    print(f"{spec:36s} V range [{V.min():.3f}, {V.max():.3f}]  s_w(1/4)={s_w(g, prof, 0.25):.4f}"
          f"  r_w(1/4, 4)={r_w(g, prof, 0.25, 4.0):.4f}")

# %% averaging exp(-<ell, V>) over clouds has a closed form
prof = parse_profile("indicator:A=2,a0=0.25")
ell = np.zeros(g.nv)
ell[[3, 17, 40]] = 0.5
W = prof.matrix(g)
vals = [np.exp(-ell @ W[:, c.vertices(g)].sum(axis=1)) if len(c) else 1.0
        for c in (sample_cloud(g, 1.5, stream(2, "mc", r)) for r in range(5000))]
print("MC", np.mean(vals).round(4), "closed form", round(annealed_fk_weight(g, prof, 1.5, ell, W=W), 4))
