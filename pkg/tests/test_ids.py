import numpy as np
import pytest

from gasketlab.errors import CapacityError, SolverError, ValidationError
from gasketlab.gasket import D_F, D_W, GasketGraph
from gasketlab.ids import (Family, annealed_laplace, convergence_study, empirical_ids, free_trace,
                           laplace_from_counting, lifschitz_fit_laplace, lifschitz_fit_measure,
                           log_grid, lower_certificate, lower_rhs, periodized_traces,
                           quantile_window, scale_for, upper_long_range, upper_reduction_check)
from gasketlab.operators import REFLECTED, SchrodingerProblem, trace_laplace
from gasketlab.potentials import indicator, polynomial
from gasketlab.subordinators import PureDrift, RelativisticStable, StableWithDrift

STABLE = StableWithDrift(0.0, D_W / 2)
TGRID = np.array([0.5, 1.0, 2.0, 4.0])


def test_zero_intensity_is_free_trace():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 0.0)
    c = annealed_laplace(fam, TGRID, 4, seed=0)
    exact = free_trace(fam.g, STABLE, tgrid=TGRID)
    assert np.array_equal(c.L, exact) and np.all(c.se < 1e-12)


def test_huge_potential_kills_everything():
    fam = Family(0, 3, PureDrift(1.0), indicator(1e6, 4.0), 20.0)
    c = annealed_laplace(fam, [1.0], 5, seed=1)
    assert c.L[0] < 1e-6 * fam.problem.dim / 3.0 ** fam.M


def test_curves_decrease_in_t():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 1.0)
    c = annealed_laplace(fam, log_grid(0.1, 10, 12), 10, seed=2)
    assert np.all(np.diff(c.per_rep, axis=1) < 0)


def test_counting_measure_consistency():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 1.0)
    spectra = fam.spectra(8, seed=3)
    c = annealed_laplace(fam, TGRID, 8, seed=3, spectra=spectra)
    assert np.allclose(laplace_from_counting(spectra, 1, TGRID), c.L, rtol=1e-8, atol=0)
    l_all, _ = empirical_ids(spectra, 1, [np.inf])
    assert l_all[0] == pytest.approx(fam.problem.dim / 3.0)


def test_threads_do_not_change_results():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 1.0)
    a = annealed_laplace(fam, TGRID, 6, seed=4)
    b = annealed_laplace(fam, TGRID, 6, seed=4, threads=3)
    assert np.array_equal(a.per_rep, b.per_rep)


def test_capacity_refusal():
    fam = Family(0, 8, PureDrift(1.0), indicator(2.0, 0.25), 1.0)
    with pytest.raises(CapacityError):
        fam.spectra(1, seed=0)
    with pytest.raises(ValidationError):
        Family(2, 2, STABLE, indicator(), 1.0, host=1)


def test_convergence_study_free_gaps_shrink():
    rows = convergence_study(PureDrift(1.0), indicator(2.0, 0.25), 0.0, [0, 1, 2], 3, [1.0], 2, seed=0)
    d01, d12 = abs(rows[1]["diff"][0]), abs(rows[2]["diff"][0])
    assert d01 / d12 >= 1.5
    # frozen exact free traces (dense eigensolver)
    assert rows[0]["L"][0] == pytest.approx(0.06162096, rel=1e-6)


def test_dirichlet_traces_vanish_at_large_t():
    rows = convergence_study(STABLE, indicator(2.0, 0.25), 1.0, [0, 1], 2, [200.0], 6, seed=5)
    assert all(r["L"][0] < 1e-3 for r in rows)


def test_periodized_traces_reduce_to_free():
    tr = periodized_traces(STABLE, indicator(2.0, 0.25), 0.0, 1, 2, TGRID, 2, seed=0)
    g = GasketGraph(1, 2)
    exact = trace_laplace(SchrodingerProblem(g, STABLE, REFLECTED).eigvalsh(), TGRID, 1)
    assert np.allclose(tr, exact[None, :], rtol=1e-12)


def test_reflected_dominates_dirichlet():
    prof = indicator(2.0, 0.25)
    N = periodized_traces(STABLE, prof, 1.0, 1, 2, TGRID, 10, seed=6, K=1)
    D = annealed_laplace(Family(1, 2, STABLE, prof, 1.0), TGRID, 10, seed=6).per_rep
    assert np.all(N >= D - 1e-12)


def test_scale_for():
    assert scale_for(1.0, 1.0, D_W) == 0
    assert scale_for(2.0 ** (D_F + D_W), 1.0, D_W) == 1
    with pytest.raises(ValidationError):
        scale_for(1.0, 0.0, D_W)


def test_lower_certificate_free():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 0.0)
    rows = lower_certificate(fam, TGRID, 2, seed=0)
    assert all(r["applicable"] and r["margin"] >= 0 for r in rows)


def test_lower_certificate_asymptotic_slope():
    ts = np.logspace(10, 20, 65)
    for phi in (PureDrift(1.0), STABLE):
        # a large decay exponent keeps the long-range terms subdominant
        v = [lower_rhs(phi, lambda a: 0.0, 1.0, t, scale_for(t, 1.0, phi.beta), 3, 50.0)[1]["log_rhs"]
             for t in ts]
        slope = np.polyfit(np.log(ts), np.log(-np.asarray(v)), 1)[0]
        assert slope == pytest.approx(D_F / (D_F + phi.beta), rel=0.01)


def test_lower_certificate_not_applicable_below_scale_zero():
    fam = Family(1, 2, STABLE, indicator(2.0, 0.25), 4.0)
    rows = lower_certificate(fam, [1.0], 2, seed=0)
    assert not rows[0]["applicable"] and np.isnan(rows[0]["margin"])


def test_upper_long_range():
    fam = Family(1, 2, STABLE, polynomial(1.0, 1.0, 0.25), 0.0)
    rows = upper_long_range(fam, [2.0, 4.0], 2, seed=0)
    assert all(r["margin"] >= 0 and r["rhs"] == r["c_hat"] for r in rows)
    fam = Family(1, 2, STABLE, polynomial(1.0, 1.0, 0.25), 1.0)
    rows = upper_long_range(fam, [2.0, 4.0, 8.0], 20, seed=1)
    assert all(r["margin"] >= 0 for r in rows)
    rel = Family(1, 2, RelativisticStable(1.0, 1.0), polynomial(), 1.0)
    with pytest.raises(ValidationError):
        upper_long_range(rel, [2.0], 1, seed=0)


def test_upper_long_range_growth():
    g = GasketGraph(2, 2)
    from gasketlab.potentials import r_w
    prof = polynomial(1.0, 1.0, 0.25)
    ts = np.array([2.0, 4.0, 8.0])
    rw = np.array([r_w(g, prof, t ** (1 / (D_F + 1)), t) for t in ts])
    c = rw / ts ** (D_F / (D_F + 1))
    assert c.max() / c.min() < 4


def test_upper_reduction_drift_equality_path():
    out = upper_reduction_check(PureDrift(1.0), indicator(4.0, 0.25), 1.0, 16.0, 2, 10, seed=0)
    assert out["c"] == 1.0
    assert np.all(out["margin"] >= -1e-8 * out["lhs"])
    out = upper_reduction_check(PureDrift(1.0), indicator(4.0, 0.25), 10.0, 4.0, 2, 5, seed=0)
    assert out["M"] == 0 and np.all(out["margin"] >= -1e-8 * out["lhs"])


def test_upper_reduction_stable():
    out = upper_reduction_check(STABLE, indicator(4.0, 0.25), 1.0, 16.0, 2, 40, seed=0)
    assert 0 < out["c"] <= 1
    assert np.mean(out["margin"] >= 0) >= 0.95
    with pytest.raises(ValidationError):
        upper_reduction_check(RelativisticStable(1.0, 1.0), indicator(), 1.0, 4.0, 2, 1, seed=0)


def test_fit_synthetic_laplace():
    t = log_grid(4, 64, 9)
    fit = lifschitz_fit_laplace(t, np.exp(-t ** 0.4))
    assert fit.slope == pytest.approx(0.4, abs=1e-3) and fit.npts == 9
    with pytest.raises(ValidationError):
        lifschitz_fit_laplace(t[:4], np.exp(-t[:4] ** 0.4))
    with pytest.raises(SolverError):
        lifschitz_fit_laplace(t, np.zeros_like(t))


def test_fit_synthetic_measure():
    # eigenvalues placed so that l([0, x]) = exp(-x**-1.5) at the grid points
    x = log_grid(0.5, 5.0, 7)
    target = np.exp(-x ** -1.5)
    N = 10**6
    ev = np.concatenate([np.full(int(round(c)), xx) for c, xx in
                         zip(np.diff(np.concatenate([[0], target * N])), x)])
    fit = lifschitz_fit_measure([ev], np.log(N) / np.log(3), x)
    assert fit.slope == pytest.approx(1.5, abs=1e-2)
    with pytest.raises(SolverError):
        lifschitz_fit_measure([ev], np.log(N) / np.log(3), log_grid(1e-3, 1e-2, 5))


def test_grids():
    g = log_grid(4, 64, 9)
    assert g[0] == 4.0 and g[-1] == 64.0 and g[4] == pytest.approx(16.0)
    spectra = [np.linspace(0, 10, 27) for _ in range(3)]
    w = quantile_window(spectra, 3, 0.1, 0.5, 5)
    assert len(w) == 5 and w[0] < w[-1]
    with pytest.raises(ValidationError):
        quantile_window(spectra, 3, 0.5, 2.0)


@pytest.mark.slow
def test_theta_crossover():
    """Measure-domain exponent decreases as the decay exponent grows."""
    slopes = []
    for theta in (0.3, 0.6, 0.9):
        fam = Family(4, 2, STABLE, polynomial(1.0, theta, 0.25), 3.0)
        spectra = fam.spectra(40, seed=11)
        x = quantile_window(spectra, 4)
        slopes.append(lifschitz_fit_measure(spectra, 4, x, n_boot=50).slope)
    assert slopes[0] > slopes[1] > slopes[2]
