"""Subordinate heat kernels, Schrodinger spectra and scaling."""
# %%
import numpy as np

from gasketlab.gasket import D_W, GasketGraph
from gasketlab.montecarlo import subordinated_heat_mc
from gasketlab.operators import (DIRICHLET, REFLECTED, Generator, SchrodingerProblem, bm_ground,
                                 reflected_kernel_scaling_check)
from gasketlab.rng import stream
from gasketlab.subordinators import StableWithDrift

g = GasketGraph(0, 3)
phi = StableWithDrift(0.0, D_W / 2)
mean, se, exact = subordinated_heat_mc(Generator(g, REFLECTED), phi, 1.0, 20000, stream(0, "k"))
print("kernel: max |MC - spectral| / SE =", np.max(np.abs(mean - exact) / se).round(2))

# %% Dirichlet ground states converge with the level
for n in range(2, 7):
    print(n, bm_ground(n))

# %% a potential shifts and lifts the spectrum
prob = SchrodingerProblem(g, phi, DIRICHLET)
print("lowest eigenvalues, V=0:", prob.eigvalsh()[:3].round(4))
print("lowest eigenvalues, V=1:", prob.eigvalsh(np.ones(prob.dim))[:3].round(4))

# %% the kernel on G_M is a rescaled kernel on G_0
print("scaling deviation M=2:", reflected_kernel_scaling_check(2, 1.0, 3))
