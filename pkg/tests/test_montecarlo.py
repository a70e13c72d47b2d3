import numpy as np
import pytest

from gasketlab.gasket import D_W, GasketGraph
from gasketlab.montecarlo import (clock_identity, dirichlet_survival, exit_floor_check, fk_survival,
                                  kernel_histogram_test, simulate_jump_chain, simulate_time_change,
                                  survival_bound_check, tail_probability)
from gasketlab.operators import DIRICHLET, REFLECTED, SchrodingerProblem
from gasketlab.potentials import indicator, sample_cloud
from gasketlab.rng import stream
from gasketlab.subordinators import PureDrift, StableWithDrift

STABLE = StableWithDrift(0.0, D_W / 2)


def test_pure_drift_step_count():
    g = GasketGraph(0, 2)
    for t in (0.5, 1.3, 2.0):
        ps = simulate_time_change(g, PureDrift(1.0), 0, [t], 3, stream(0, "steps"))
        assert ps.steps == int(np.ceil(t * 5 ** g.n - 1e-9))


def test_occupation_sums_to_horizon():
    g = GasketGraph(1, 1)
    prob = SchrodingerProblem(g, STABLE, REFLECTED)
    ps = simulate_jump_chain(prob, 3, [0.5, 2.0], 50, stream(1, "occ"))
    assert np.allclose(ps.ell.sum(axis=2), np.array([[0.5], [2.0]]))
    tc = simulate_time_change(g, STABLE, 3, [0.5, 2.0], 20, stream(1, "occ2"))
    assert np.allclose(tc.ell.sum(axis=2), np.array([[0.5], [2.0]]))


def test_occupation_from_stationarity():
    g = GasketGraph(0, 2)
    prob = SchrodingerProblem(g, PureDrift(1.0), REFLECTED)
    t, per = 1.0, 800
    mean = np.zeros(g.nv)
    var = np.zeros(g.nv)
    for x0 in range(g.nv):
        ps = simulate_jump_chain(prob, x0, [t], per, stream(2, "stat", x0))
        w = g.mass[x0] / g.total_mass()
        f = ps.ell[0] / t
        mean += float(w) * f.mean(axis=0)
        var += float(w) ** 2 * f.var(axis=0, ddof=1) / per
    target = g.mass / float(g.total_mass())
    assert np.all(np.abs(mean - target) <= 3 * np.sqrt(var))


@pytest.mark.parametrize("scheme", ["jump_chain", "time_change"])
def test_kernel_histogram(scheme):
    prob = SchrodingerProblem(GasketGraph(0, 3), STABLE, REFLECTED)
    _, p, dof = kernel_histogram_test(prob, 0, 1.0, 20000, stream(3, scheme), scheme=scheme)
    assert p > 1e-3 and dof > 10


def test_killed_histogram():
    prob = SchrodingerProblem(GasketGraph(0, 3), STABLE, DIRICHLET)
    x0 = int(prob.keep[len(prob.keep) // 2])
    _, p, _ = kernel_histogram_test(prob, x0, 0.5, 20000, stream(3, "killed"))
    assert p > 1e-3


def test_dirichlet_survival_matches_spectrum():
    g = GasketGraph(0, 3)
    for phi in (PureDrift(1.0), STABLE):
        prob = SchrodingerProblem(g, phi, DIRICHLET)
        x0 = int(g.index((2, 2)))
        mc, se, exact = dirichlet_survival(prob, x0, [0.05, 0.2, 0.5], 20000, stream(4, repr(phi)))
        assert np.all(np.abs(mc - exact) <= 3 * se)


def test_fk_survival_trivial_cases():
    g = GasketGraph(0, 2)
    prob = SchrodingerProblem(g, STABLE, REFLECTED)
    out = fk_survival(prob, indicator(2.0, 0.25), 0.0, 0, [1.0, 2.0], 50, stream(5, "a"), stream(5, "b"))
    assert np.all(out["A"] == 1.0) and np.all(out["B"] == 1.0)
    out = fk_survival(prob, indicator(2.0, 0.25), 1.0, 0, [0.0], 50, stream(5, "a"), stream(5, "b"))
    assert out["A"][0] == 1.0 and out["B"][0] == 1.0


def test_estimators_agree_and_rao_blackwell():
    g = GasketGraph(0, 3)
    prob = SchrodingerProblem(g, STABLE, REFLECTED)
    out = fk_survival(prob, indicator(2.0, 0.25), 1.0, 5, [1.0, 4.0], 3000, stream(6, "p"), stream(6, "c"))
    joint = np.sqrt(out["se_A"] ** 2 + out["se_B"] ** 2)
    assert np.all(np.abs(out["A"] - out["B"]) <= 3 * joint)
    assert np.all(out["se_A"] < out["se_B"])


def test_clock_identity():
    g = GasketGraph(0, 3)
    prof = indicator(1.0, 0.25)
    cloud = sample_cloud(g, 2.0, stream(7, "cl"))
    ps = simulate_jump_chain(SchrodingerProblem(g, PureDrift(1.0), REFLECTED), 0, [1.0], 1, stream(7, "path"))
    p, se, target = clock_identity(g, prof, ps.ell[0, 0], cloud, 100000, stream(7, "marks"))
    assert abs(p - target) <= 3 * se


def test_tail_probability():
    p, se = tail_probability(STABLE, 1.0, 100.0, 200000, stream(8, "tail"))
    # P(S_1 > x) = erf(1 / (2 sqrt(x))) for exponent lam**0.5
    from scipy.special import erf
    assert abs(p - erf(0.05)) < 3 * se
    assert tail_probability(PureDrift(1.0), 1.0, 2.0, 100, stream(8, "d"))[0] == 0.0


def test_survival_bounds_small():
    rows = survival_bound_check(STABLE, indicator(4.0, 0.25), 1.0, 1, 2, [4.0, 8.0], 1000, seed=0)
    for r in rows:
        assert r["A"] + 2 * r["se_A"] >= r["lower_rhs"]
        assert r["A"] - 2 * r["se_A"] <= r["upper_rhs"]
        assert 0 < r["ground_ratio"] <= 1


def test_exit_floor():
    for M in (0, 1):
        out = exit_floor_check(STABLE, M, 3 - M, [0.5, 1.0, 2.0], (2, 2), 5000, seed=M)
        assert np.all(out["mc"] + 2 * out["se"] >= out["floor"])
        assert np.all(out["spectral"] >= out["floor"])
        assert np.all(np.abs(out["mc"] - out["spectral"]) <= 3 * out["se"] + 1e-12)
