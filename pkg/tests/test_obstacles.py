import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasketlab.errors import ValidationError
from gasketlab.gasket import D_W
from gasketlab.obstacles import (C_K_delta, D_value, ObstacleSetup, R_min, classify,
                                 coarse_domains, compare_eigenvalues, domain_checks,
                                 doubling_constant, empirical_eps0, eps_stability, lambda_restricted,
                                 m0_value, probe_P1, probe_P3, probe_P6, probe_report,
                                 sweep_summary, tau0, comparison_sweep)
from gasketlab.potentials import PoissonConfiguration


@pytest.fixture(scope="module")
def setup():
    # eps = 1/32 on a resolution-6 graph: one ball scale (10 b eps = 0.625) below r0
    return ObstacleSetup(5, n_base=1)


def cloud_at(g, cells):
    cells = np.asarray(cells, dtype=int).reshape(-1)
    return PoissonConfiguration(0, g.n, g.cell_ij[cells].reshape(-1, 2), np.zeros(len(cells), int), 1.0)


def test_setup_validation():
    with pytest.raises(ValidationError):
        ObstacleSetup(3, b=3.0)
    with pytest.raises(ValidationError):
        ObstacleSetup(3, b=0.125)
    with pytest.raises(ValidationError):
        ObstacleSetup(3, R=3.0)
    with pytest.raises(ValidationError):
        ObstacleSetup(3, delta=20.0)
    s = ObstacleSetup(3, n_base=1)
    assert s.eps == 0.125 and s.g.n == 4 and s.diffusion
    assert not ObstacleSetup(3, gamma=1.0).diffusion


def test_doubling_constant(setup):
    cd = setup.C_d
    assert 1 < cd < 20
    # every centre at once bounds any sampled maximum
    assert doubling_constant(setup.g, setup.r0, samples=setup.g.nv) >= cd - 1e-12


def test_empty_cloud(setup):
    g = setup.g
    empty = cloud_at(g, [])
    cls = classify(setup, empty)
    dom = coarse_domains(setup, empty, cls)
    assert dom.theta_b.all() and dom.U_hat.all() and dom.U.all()
    lb, lv, mg = compare_eigenvalues(setup, empty, cls)
    assert lb == pytest.approx(0.0, abs=1e-9) and lv == pytest.approx(0.0, abs=1e-9)
    assert mg == pytest.approx(setup.delta, abs=1e-9)


def test_dense_cloud_all_good():
    s = ObstacleSetup(5, n_base=1, nu=8.0)
    c = s.cloud(0, 0)
    cls = classify(s, c)
    assert len(c) > 1000 and cls.good.all() and cls.bad_volume == 0.0


def test_isolated_point_is_bad():
    s = ObstacleSetup(5, n_base=1, delta=0.5)
    c = cloud_at(s.g, [len(s.g.cell_ij) // 2])
    cls = classify(s, c)
    assert not cls.good[0]
    assert 0 < cls.bad_volume <= s.delta
    # all points bad: U_hat is the whole graph, U loses the point's triangle
    dom = coarse_domains(s, c, cls)
    assert dom.U_hat.all() and dom.theta_b.all()
    assert not dom.U.all()


def test_trivial_when_no_scale_below_r0():
    s = ObstacleSetup(2, n_base=2, delta=0.5)
    c = cloud_at(s.g, [3])
    cls = classify(s, c)
    assert cls.trivial and cls.good.all()


@pytest.mark.parametrize("seed", range(4))
def test_bad_volume_and_domain_inclusions(setup, seed):
    s = ObstacleSetup(5, n_base=1, nu=0.3, delta=0.2)
    c = s.cloud(seed, 0)
    cls = classify(s, c)
    assert cls.bad_volume <= s.delta + 1e-12
    dom = coarse_domains(s, c, cls)
    # triangles removed from U_hat are among those removed from U
    assert np.all(dom.U_hat[dom.U])
    chk = domain_checks(s, c, cls, dom)
    assert chk["theta_in_Uhat"] and chk["U_in_Uhat"] and chk["bad_volume_ok"]
    assert chk["eig_order_ok"] and chk["lambda_theta"] >= chk["lambda_Uhat"] * (1 - 1e-8)


def test_margin_nondecreasing_in_delta():
    margins = []
    for delta in (0.02, 0.05, 0.2, 0.5):
        s = ObstacleSetup(5, n_base=1, nu=0.3, delta=delta)
        c = s.cloud(2, 0)
        margins.append(compare_eigenvalues(s, c)[2])
    assert np.all(np.diff(margins) >= -1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_adding_points_keeps_good_points_good(seed):
    s = ObstacleSetup(4, n_base=2, nu=0.5, delta=0.3)
    g = s.g
    rng = np.random.default_rng(seed)
    base = rng.choice(len(g.cell_ij), size=6, replace=False)
    extra = rng.choice(len(g.cell_ij), size=4, replace=False)
    a = classify(s, cloud_at(g, base))
    b = classify(s, cloud_at(g, np.concatenate([base, extra])))
    assert np.all(b.good[:len(base)] >= a.good)


def test_lambda_restricted_monotone_in_domain(setup):
    g = setup.g
    full = np.ones(g.nv, bool)
    part = g.ij[:, 0] < 2 ** g.n // 2
    assert lambda_restricted(setup, part) >= lambda_restricted(setup, full)
    assert lambda_restricted(setup, np.zeros(g.nv, bool)) == np.inf
    V = np.full(g.nv, 0.3)
    assert lambda_restricted(setup, full, V) == pytest.approx(0.3, abs=1e-7)


def test_sweep_and_summary():
    rows = comparison_sweep([3, 4], 5, seed=0, n_base=2, nu=0.3)
    assert len(rows) == 10 and [r["eps"] for r in rows[:5]] == [0.125] * 5
    assert all(r["bad_volume_ok"] for r in rows)
    again = comparison_sweep([3, 4], 5, seed=0, n_base=2, nu=0.3, threads=2)
    assert [r["margin"] for r in rows] == [r["margin"] for r in again]
    summ = sweep_summary(rows, 10.0)
    assert [s["eps"] for s in summ] == [0.125, 0.0625]
    assert all(0 <= s["violating"] <= 1 for s in summ)


def test_empirical_eps0():
    summ = [dict(eps=0.25, violating=0.5), dict(eps=0.125, violating=0.02),
            dict(eps=0.0625, violating=0.0)]
    assert empirical_eps0(summ) == 0.125
    assert empirical_eps0([dict(eps=0.1, violating=0.5)]) is None


def test_constants():
    assert C_K_delta(0.0, 1.0, 0.0) == 1.0
    assert C_K_delta(2.0, 0.5, 1.0) == pytest.approx(np.exp(2) * 6)
    assert R_min(0.0, 1.0, 5.0) == 1.0
    with pytest.raises(ValidationError):
        m0_value(0.5, 2.0, 1.0)
    m_small = m0_value(0.4, 0.9, 2.0)
    m_large = m0_value(0.4, 0.9, 20.0)
    assert 1 <= m_small <= m_large
    assert D_value(2.0, 4.0, 1) == pytest.approx(80.0)


def test_tau0_rules():
    s = ObstacleSetup(3)
    assert tau0(s, "travel") == pytest.approx(2 * 2.125 ** D_W)
    assert tau0(s, "recipe") == pytest.approx(0.25 ** D_W)
    with pytest.raises(ValidationError):
        tau0(s, "other")


def test_probe_report_diffusion():
    rep = probe_report(ObstacleSetup(3, n_base=1), samples=3)
    assert np.isfinite(rep["c0"]) and rep["c0"] > 0
    assert 0 < rep["c1"] < 0.5 and 0 < rep["c2"] <= 1
    assert rep["P2_ok"] and np.isnan(rep["kappa"])


def test_probe_P1_bounded_across_eps():
    c0 = [probe_P1(ObstacleSetup(M, n_base=1)) for M in (2, 3, 4)]
    assert all(np.isfinite(c0)) and max(c0) / min(c0) < 2


def test_probe_P3_eps_stability():
    c1 = [probe_P3(ObstacleSetup(M, n_base=1), samples=4)[0] for M in (3, 4, 5)]
    assert eps_stability(c1) < 2
    assert eps_stability([1.0, 0.0]) == np.inf


def test_probe_P6_overshoot_decay():
    _, (c3, kappa) = probe_P6(ObstacleSetup(3, gamma=D_W / 2, n_base=1), samples=3)
    assert c3 > 0 and kappa > 0
