"""Gasket graphs: counts, masses, labels and the d-regularity fit."""
# %%
import numpy as np

from gasketlab.gasket import D_F, GasketGraph, invariant_report, project_lattice

# G_1 at resolution 3 is the same lattice as G_0 at resolution 4
g = GasketGraph(1, 3)
print(g, "vertices", g.nv, "edges", len(g.edges), "total mass", g.total_mass())

# %% exact invariants plus the fitted volume growth exponent
rep = invariant_report(GasketGraph(0, 6))
for k in ("nv", "ne", "counts_ok", "mass_ok", "degree_ok", "labels_ok", "regularity_slope"):
    print(f"{k:>18}: {rep[k]}")
print(f"{'log3/log2':>18}: {D_F:.4f}")

# %% folding G_1 onto G_0: every vertex lands in the unit triangle
ij = project_lattice(g.ij, 0, g.n)
print("projected range:", ij.min(axis=0), ij.max(axis=0), "image size", len(np.unique(ij, axis=0)))
