"""Annealed Laplace transforms, bound certificates and Lifschitz fits.

Finite boxes only show the tail exponents approximately; the slopes move with
box size and intensity.
"""
# %%
from gasketlab.gasket import D_W
from gasketlab.ids import (Family, annealed_laplace, lifschitz_fit_laplace, lifschitz_fit_measure,
                           log_grid, lower_certificate, quantile_window, upper_long_range)
from gasketlab.potentials import indicator, polynomial
from gasketlab.subordinators import PureDrift, StableWithDrift

fam = Family(2, 3, StableWithDrift(1.0, D_W / 2), polynomial(1.0, 1.0, 0.25), 1.0)
curve = annealed_laplace(fam, [2.0, 4.0, 8.0, 16.0], 40, seed=0)
for lo, up in zip(lower_certificate(fam, None, None, 0, curve=curve),
                  upper_long_range(fam, None, None, 0, curve=curve)):
    print(f"t={lo['t']:5.1f}  lower {lo['rhs']:.2e} <= L {lo['Lhat']:.4f} <= upper {up['rhs']:.4f}")

# %% Laplace domain, pure drift
tgrid = log_grid(4, 64, 9)
fam = Family(4, 2, PureDrift(1.0), indicator(4.0, 0.25), 0.3)
fit = lifschitz_fit_laplace(tgrid, annealed_laplace(fam, tgrid, 30, seed=1).per_rep)
print("Laplace-domain slope", round(fit.slope, 3), "CI", fit.ci)

# %% measure domain, stable
fam = Family(4, 2, StableWithDrift(0.0, D_W / 2), indicator(4.0, 0.25), 3.0)
spectra = fam.spectra(60, seed=1)
fit = lifschitz_fit_measure(spectra, 4, quantile_window(spectra, 4))
print("measure-domain slope", round(fit.slope, 3), "CI", fit.ci)
