import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasketlab.errors import CapacityError, ValidationError
from gasketlab.gasket import D_F, D_W, GasketGraph
from gasketlab.operators import (DIRICHLET, KILL_FIRST, REFLECTED, SUB_FIRST, Generator,
                                 SchrodingerProblem, bm_ground, decimation_ground,
                                 eigen_scaling_check, heat_kernel, reflected_kernel_scaling_check,
                                 subordinate_kernel, sup_kernel_constants, trace_laplace)
from gasketlab.rng import stream
from gasketlab.subordinators import PureDrift, StableWithDrift

STABLE = StableWithDrift(0.0, D_W / 2)


@pytest.fixture(scope="module")
def g():
    return GasketGraph(1, 3)


def test_generator_symmetric_and_spectrum(g):
    for mode in (REFLECTED, DIRICHLET):
        gen = Generator(g, mode)
        H = gen.sym().toarray()
        assert np.allclose(H, H.T)
        sp = gen.spectrum()
        assert np.all(np.diff(sp.values) >= 0)
        E = sp.efuncs
        res = np.abs(E.T @ (E * gen.mass[:, None]) - np.eye(gen.dim)).max()
        assert res < 1e-8
    w = Generator(g, REFLECTED).spectrum()
    assert w.values[0] == pytest.approx(0.0, abs=1e-9) and w.values[1] > 1e-6
    f0 = w.efuncs[:, 0]
    assert np.allclose(f0, f0[0])
    assert Generator(g, DIRICHLET).spectrum().values[0] > 0.1


def test_generator_rejects_bad_options(g):
    with pytest.raises(ValidationError):
        Generator(g, "neumann")
    with pytest.raises(ValidationError):
        Generator(g, kappa=0)


def test_heat_kernel_limits(g):
    ref = Generator(g, REFLECTED)
    K = heat_kernel(ref, 1e3)
    assert np.abs(K - 1 / 3.0 ** g.M).max() < 1e-6
    rows = heat_kernel(ref, 1.0) @ ref.mass
    assert np.abs(rows - 1).max() < 1e-10
    dir_ = Generator(g, DIRICHLET)
    for t in (0.01, 0.1, 1.0):
        assert np.all(heat_kernel(dir_, t) @ dir_.mass < 1)
    with pytest.raises(ValidationError):
        heat_kernel(ref, -1.0)


def test_series_matches_spectral(g):
    for mode in (REFLECTED, DIRICHLET):
        gen = Generator(g, mode)
        a = heat_kernel(gen, 0.3)
        b = heat_kernel(gen, 0.3, method="series")
        assert np.abs(a - b).max() < 1e-9 * np.abs(a).max()


def test_semigroup_property(g):
    gen = Generator(g, REFLECTED)
    K1, K2, K3 = heat_kernel(gen, 0.2), heat_kernel(gen, 0.5), heat_kernel(gen, 0.7)
    comp = (K1 * gen.mass[None, :]) @ K2
    assert np.abs(comp - K3).max() < 1e-8


def test_pure_drift_kernel_is_time_scaled(g):
    b = 2.5
    p = subordinate_kernel(SchrodingerProblem(g, PureDrift(b), REFLECTED), 0.4)
    q = heat_kernel(Generator(g, REFLECTED), b * 0.4)
    assert np.abs(p - q).max() <= 1e-12 * np.abs(q).max()


def test_subordinate_kernel_against_sampled_heat_kernels():
    from gasketlab.montecarlo import subordinated_heat_mc
    g = GasketGraph(0, 3)
    gen = Generator(g, REFLECTED)
    mean, se, exact = subordinated_heat_mc(gen, STABLE, 1.0, 10000, stream(0, "sub"))
    assert np.all(np.abs(mean - exact) <= 3 * se + 1e-12)


def test_sup_kernel_constant_stable_across_scales():
    for phi in (STABLE, PureDrift(1.0)):
        c, ratio = sup_kernel_constants(phi)
        assert ratio < 2
        assert all(v > 0 for v in c.values())


def test_uniform_kernel_bound_nonincreasing():
    g = GasketGraph(0, 4)
    prob = SchrodingerProblem(g, STABLE, REFLECTED)
    sups = [np.diag(prob.kernel(t)).max() for t in (1, 2, 4, 8)]
    assert np.all(np.diff(sups) <= 0) and np.isfinite(sups).all()


def test_subgaussian_envelopes():
    g = GasketGraph(0, 5)
    gen = Generator(g, REFLECTED)
    d = g.dist()
    for t in (0.02, 0.05, 0.1):
        K = heat_kernel(gen, t, method="series")
        x = (d / t ** (1 / D_W)) ** (D_W / (D_W - 1))
        y = np.log(K * t ** (D_F / D_W))
        slope, icpt = np.polyfit(x.ravel(), y.ravel(), 1)
        r = y - (slope * x + icpt)
        # log-kernel decays linearly in the subgaussian variable, up to a bounded band
        assert slope < 0
        assert r.max() - r.min() < 2.5


def test_schrodinger_shifts_and_zero_mode(g):
    prob = SchrodingerProblem(g, STABLE, REFLECTED)
    w0 = prob.eigvalsh()
    assert w0[0] == pytest.approx(0.0, abs=1e-9)
    w1 = prob.eigvalsh(np.full(g.nv, 0.75))
    assert np.allclose(w1, w0 + 0.75, atol=1e-9)
    with pytest.raises(ValidationError):
        prob.eigvalsh(-np.ones(g.nv))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_eigenvalues_monotone_in_potential(seed):
    g = GasketGraph(0, 3)
    rng = np.random.default_rng(seed)
    V = rng.exponential(1.0, g.nv)
    V2 = V + rng.exponential(1.0, g.nv) * (rng.uniform(size=g.nv) < 0.5)
    prob = SchrodingerProblem(g, STABLE, DIRICHLET)
    a, b = prob.eigvalsh(V), prob.eigvalsh(V2)
    assert np.all(b >= a - 1e-9)
    t = np.array([0.1, 1.0, 5.0])
    assert np.all(trace_laplace(b, t, 0) <= trace_laplace(a, t, 0) + 1e-12)


def test_dirichlet_ground_state_and_decimation():
    for n in (2, 3, 4, 5):
        gen = Generator(GasketGraph(0, n), DIRICHLET)
        assert gen.spectrum().values[0] == pytest.approx(bm_ground(n), rel=1e-10)
    assert decimation_ground(1) == 0.5
    lam = [decimation_ground(n) for n in range(1, 8)]
    for a, b in zip(lam, lam[1:]):
        assert a == pytest.approx(b * (5 - 4 * b), rel=1e-12)
    # level n and n+1 agree within 3% for n >= 5; frozen dense-solver value
    assert bm_ground(5) == pytest.approx(2.80216379549246, rel=1e-10)
    assert abs(bm_ground(6) / bm_ground(5) - 1) < 0.03


def test_subordination_orders():
    g = GasketGraph(0, 4)
    lam_bm = bm_ground(4)
    kill = SchrodingerProblem(g, STABLE, DIRICHLET, KILL_FIRST).eigvalsh()[0]
    sub = SchrodingerProblem(g, STABLE, DIRICHLET, SUB_FIRST).eigvalsh()[0]
    assert kill == pytest.approx(float(STABLE(lam_bm)), rel=1e-10)
    assert sub <= float(STABLE(lam_bm))


def test_trace_limits(g):
    prob = SchrodingerProblem(g, PureDrift(1.0), REFLECTED)
    w = prob.eigvalsh()
    assert trace_laplace(w, 1e-12, g.M)[0] == pytest.approx(g.nv / 3.0 ** g.M)
    assert trace_laplace(w, 1e4, g.M)[0] == pytest.approx(1 / 3.0 ** g.M)
    L = trace_laplace(w, np.linspace(0.1, 5, 20), g.M)
    assert np.all(np.diff(L) < 0) and np.all(L > 0)


@pytest.mark.parametrize("M,t", [(0, 1.0), (1, 1.0), (2, 0.5), (2, 1.0), (2, 2.0)])
def test_kernel_scaling_identity(M, t):
    dev = reflected_kernel_scaling_check(M, t, 3)
    assert dev < 1e-10
    if M == 0:
        assert dev == 0.0


def test_eigen_scaling_drift():
    b = 2.0
    gM = GasketGraph(1, 3)
    free = eigen_scaling_check(1, 3, PureDrift(b), np.zeros(gM.nv))
    assert free["deviation"] < 1e-10
    assert free["rhs"] == pytest.approx(2.0 ** (-D_W) * b * bm_ground(4), rel=1e-10)
    V = np.random.default_rng(1).uniform(0, 5, gM.nv)
    for mode in (DIRICHLET, REFLECTED):
        assert eigen_scaling_check(1, 3, PureDrift(b), V, mode=mode)["deviation"] < 1e-10


def test_eigen_scaling_stable_inequality():
    gM = GasketGraph(2, 2)
    V = np.random.default_rng(2).uniform(0, 5, gM.nv)
    for phi in (STABLE, StableWithDrift(1.0, D_W / 2)):
        out = eigen_scaling_check(2, 2, phi, V)
        assert 0 < out["c"] <= 1
        assert out["lhs"] >= out["rhs"] * (1 - 1e-8)


def test_capacity_refusals():
    g = GasketGraph(0, 8)
    with pytest.raises(CapacityError):
        Generator(g).spectrum()
    prob = SchrodingerProblem(g, PureDrift(1.0), DIRICHLET)
    sp = prob.spectrum(k=4)
    assert sp.partial and len(sp.values) == 4
    assert sp.values[0] == pytest.approx(bm_ground(8), rel=1e-6)
    with pytest.raises(CapacityError):
        SchrodingerProblem(g, STABLE, DIRICHLET).spectrum()
