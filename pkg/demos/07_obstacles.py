"""Enlargement of obstacles: good/bad points, coarse domains, probes."""
# %%
from gasketlab.gasket import D_W
from gasketlab.obstacles import (ObstacleSetup, classify, coarse_domains, compare_eigenvalues,
                                 domain_checks, eps_stability, probe_sweep, sweep_summary,
                                 comparison_sweep)

st = ObstacleSetup(5, nu=0.3, n_base=1, delta=0.2)
cloud = st.cloud(seed=0, r=0)
cls = classify(st, cloud)
dom = coarse_domains(st, cloud, cls)
print(len(cloud), "points,", int(cls.good.sum()), "good; bad volume", round(cls.bad_volume, 4))
print("kept vertices:", int(dom.theta_b.sum()), int(dom.U_hat.sum()), int(dom.U.sum()), "of", st.g.nv)
print("eigenvalues (coarse, V, margin):", compare_eigenvalues(st, cloud, cls))
print(domain_checks(st, cloud, cls, dom))

# %% a small sweep over eps
for row in sweep_summary(comparison_sweep([3, 4], 20, seed=1, nu=0.1), 10.0):
    print(row)

# %% the hitting constant of (P3) barely moves with eps
for gamma in (D_W, D_W / 2):
    reps = probe_sweep([3, 4], gamma=gamma, samples=3)
    print(f"gamma={gamma:.3f} c1:", [round(r["c1"], 4) for r in reps],
          "ratio", round(eps_stability([r["c1"] for r in reps]), 3))
