"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line; the lines are printed in the
terminal summary (see conftest.py) and when the file is run as a script.
"""
import time

import numpy as np
import pytest
from scipy.special import erf

from gasketlab.gasket import D_F, D_W, GasketGraph, invariant_report
from gasketlab.ids import (Family, annealed_laplace, coupled_monotonicity, lifschitz_fit_laplace,
                           lifschitz_fit_measure, log_grid, lower_certificate, quantile_window,
                           upper_long_range)
from gasketlab.montecarlo import subordinated_heat_mc, survival_bound_check, tail_probability
from gasketlab.obstacles import comparison_sweep, eps_stability, probe_sweep, sweep_summary
from gasketlab.operators import (REFLECTED, Generator, SchrodingerProblem, eigen_scaling_check,
                                 heat_kernel, reflected_kernel_scaling_check, subordinate_kernel)
from gasketlab.potentials import annealed_fk_weight, indicator, polynomial, sample_cloud
from gasketlab.rng import stream
from gasketlab.subordinators import PureDrift, StableWithDrift, tail_bound

STABLE = StableWithDrift(0.0, D_W / 2)
STABLE_DRIFT = StableWithDrift(1.0, D_W / 2)
RESULTS = {}


def record(num, ok, detail, t0, check=True):
    line = f"criterion {num:>3}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - t0:.1f} s)"
    RESULTS[num] = line
    print(line)
    if check:
        assert ok, line
    return line


def test_c01_geometry():
    t0 = time.perf_counter()
    sizes = [(0, n) for n in range(0, 7)] + [(1, 4), (2, 3), (3, 3), (4, 2)]
    ok, slopes = True, []
    for M, n in sizes:
        rep = invariant_report(GasketGraph(M, n), seed=M + n)
        ok &= all(v for k, v in rep.items() if k.endswith("_ok"))
        if "regularity_slope" in rep:
            slopes.append(rep["regularity_slope"])
    ok &= len(slopes) >= 3 and all(abs(s - D_F) <= 0.15 for s in slopes)
    wall = time.perf_counter() - t0
    record(1, ok and wall < 10, f"{len(sizes)} graphs exact, regularity slopes "
           f"{min(slopes):.3f}..{max(slopes):.3f} vs {D_F:.3f}", t0)


def test_c02_subordination_identity():
    t0 = time.perf_counter()
    gen = Generator(GasketGraph(0, 3), REFLECTED)
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        mean, se, exact = subordinated_heat_mc(gen, STABLE, t, 20000, stream(2, "c02", int(4 * t)))
        worst = max(worst, float(np.max(np.abs(mean - exact) / np.maximum(se, 1e-300))))
    b, dev = 1.7, 0.0
    prob = SchrodingerProblem(gen.g, PureDrift(b), REFLECTED)
    for t in (0.5, 1.0, 2.0):
        p, q = subordinate_kernel(prob, t), heat_kernel(gen, b * t)
        dev = max(dev, float(np.max(np.abs(p - q)) / np.max(np.abs(q))))
    record(2, worst <= 3 and dev <= 1e-12,
           f"stable max |MC - spectral| = {worst:.2f} SE; pure drift rel. dev {dev:.1e}", t0)


def test_c03_tail_bound():
    t0 = time.perf_counter()
    p, se = tail_probability(STABLE, 1.0, 100.0, 10**6, stream(3, "c03"))
    bound = tail_bound(STABLE, 1.0, 100.0)
    record(3, p <= 0.31651 and bound <= 0.31651,
           f"P(S_1 > 100) = {p:.5f} +- {se:.5f} (exact {erf(0.05):.5f}), bound {bound:.5f}", t0)


def test_c04_exponential_formula():
    t0 = time.perf_counter()
    g = GasketGraph(0, 3)
    prof = indicator(2.0, 0.25)
    W = prof.matrix(g)
    nu, N = 1.5, 10**5
    # potentials of N clouds, shared by all occupation vectors
    rng = stream(4, "c04-clouds")
    V = np.zeros((N, g.nv))
    for k in range(N):
        c = sample_cloud(g, nu, rng)
        if len(c):
            V[k] = W[:, c.vertices(g)].sum(axis=1)
    rng = stream(4, "c04-ell")
    worst = 0.0
    for _ in range(10):
        ell = rng.exponential(0.4, g.nv) * (rng.uniform(size=g.nv) < 0.4)
        vals = np.exp(-V @ ell)
        exact = annealed_fk_weight(g, prof, nu, ell, W=W)
        z = abs(vals.mean() - exact) / (vals.std(ddof=1) / np.sqrt(N))
        worst = max(worst, float(z))
    record(4, worst <= 3, f"10 occupation vectors, worst |MC - analytic| = {worst:.2f} SE", t0)


def test_c05_scaling_identities():
    t0 = time.perf_counter()
    kdev = max(reflected_kernel_scaling_check(M, t, 3) for M in (1, 2) for t in (0.5, 1.0, 2.0))
    rng = np.random.default_rng(5)
    edev = 0.0
    for M in (1, 2):
        V = rng.uniform(0, 5, GasketGraph(M, 2).nv)
        edev = max(edev, eigen_scaling_check(M, 2, PureDrift(2.0), V)["deviation"])
    record(5, kdev < 1e-10 and edev < 1e-10,
           f"kernel scaling dev {kdev:.1e}, drift eigenvalue dev {edev:.1e}", t0)


def test_c06_monotonicity():
    t0 = time.perf_counter()
    out = coupled_monotonicity(STABLE_DRIFT, indicator(4.0, 0.25), 1.0, 4, [2.0, 4.0, 8.0], 200, 7,
                               host=1, K=3)
    ok = bool(np.all(out["N0_N1"] >= -2 * out["N0_N1_se"]) and np.all(out["N1_D1"] >= -2 * out["N1_D1_se"]))
    record(6, ok, "E N0 >= E N1 >= E D1 at t = 2, 4, 8; min gaps "
           f"{np.min(out['N0_N1'] / out['N0_N1_se']):.1f} and {np.min(out['N1_D1'] / out['N1_D1_se']):.1f} SE", t0)


def test_c07_bound_sandwich():
    t0 = time.perf_counter()
    fam = Family(2, 4, STABLE_DRIFT, polynomial(1.0, 1.0, 0.25), 1.0)
    curve = annealed_laplace(fam, [2.0, 4.0, 8.0, 16.0], 100, 7)
    lo = [r for r in lower_certificate(fam, None, None, 7, curve=curve) if r["t"] in (4.0, 8.0, 16.0)]
    up = [r for r in upper_long_range(fam, None, None, 7, curve=curve) if r["t"] in (2.0, 4.0, 8.0)]
    ok_lo = all(r["applicable"] and r["rhs"] <= r["Lhat"] + 2 * r["se"] for r in lo)
    ok_up = all(r["Lhat"] - 2 * r["se"] <= r["rhs"] for r in up)
    record(7, ok_lo and ok_up, f"lower holds at {len(lo)}/3 times, upper at {len(up)}/3 times "
           f"(upper/L ratio >= {min(r['rhs'] / r['Lhat'] for r in up):.1f})", t0)


def _measure_slope(fam, reps, seed):
    spectra = fam.spectra(reps, seed)
    x = quantile_window(spectra, fam.M)
    return lifschitz_fit_measure(spectra, fam.M, x, seed=seed)


def test_c08_lifschitz_fits():
    t0 = time.perf_counter()
    # (a) pure drift, Laplace domain
    tgrid = log_grid(4, 64, 9)
    fam = Family(4, 2, PureDrift(1.0), indicator(4.0, 0.25), 0.3)
    curve = annealed_laplace(fam, tgrid, 100, 1)
    fa = lifschitz_fit_laplace(tgrid, curve.per_rep, seed=1)
    ta = np.log(3) / np.log(15)
    # (b) stable, measure domain, short range
    fb = _measure_slope(Family(4, 2, STABLE, indicator(4.0, 0.25), 3.0), 200, 1)
    tb = np.log(9) / np.log(5)
    # (c) long-range decay theta < gamma
    theta = 0.9
    fc = _measure_slope(Family(4, 2, STABLE, polynomial(1.0, theta, 0.25), 3.0), 100, 1)
    tc = D_F / theta
    ok_a = abs(fa.slope / ta - 1) <= 0.25
    ok_b = abs(fb.slope / tb - 1) <= 0.25
    ok_c = abs(fc.slope / tc - 1) <= 0.30 and fc.slope > fb.slope
    lines = [
        record("8a", ok_a, f"Laplace slope {fa.slope:.3f} vs {ta:.3f} (+-25%), finite box M=4", t0, False),
        record("8b", ok_b, f"measure slope {fb.slope:.3f} vs {tb:.3f} (+-25%), finite box M=4", t0, False),
        record("8c", ok_c, f"long-range slope {fc.slope:.3f} vs d/theta {tc:.3f} (+-30%), "
               f"above short-range {fb.slope:.3f}", t0, False),
    ]
    assert ok_a and ok_b and ok_c, "\n".join(lines)


def test_c09_survival_bounds():
    t0 = time.perf_counter()
    rows = survival_bound_check(STABLE, indicator(4.0, 0.25), 1.0, 1, 2, [4.0, 8.0, 16.0], 4000, seed=9)
    ok = True
    for r in rows:
        ok &= r["A"] + 2 * r["se_A"] >= r["lower_rhs"]
        ok &= r["A"] - 2 * r["se_A"] <= r["upper_rhs"]
        ok &= abs(r["A"] - r["B"]) <= 3 * np.hypot(r["se_A"], r["se_B"])
    record(9, ok, "lower <= survival <= upper at t = 4, 8, 16; estimators A/B agree; "
           f"survival {rows[0]['A']:.3g}..{rows[-1]['A']:.3g}", t0)


def test_c10_enlargement_of_obstacles():
    t0 = time.perf_counter()
    rows = comparison_sweep([4, 5, 6], 200, seed=3, nu=0.03)
    summ = sweep_summary(rows, 10.0)
    viol = [s["violating"] for s in summ]          # eps = 2**-4, 2**-5, 2**-6
    ok = (1 - viol[-1] >= 0.95 and all(b <= a for a, b in zip(viol, viol[1:]))
          and all(r["bad_volume_ok"] for r in rows))
    capped = summ[-1]["capped"]
    record(10, ok, f"violating fractions {viol} over eps = 2^-4..2^-6; bad volume ok on all; "
           f"both capped at K on {capped:.0%} at eps = 2^-6", t0)


def test_c11_probe_suite():
    t0 = time.perf_counter()
    keys = {"c0", "c1", "P2", "c2", "c3", "kappa", "C_K_delta", "m0", "D", "R_min"}
    ratios, ok = [], True
    for gamma in (D_W, D_W / 2):
        reps = probe_sweep([4, 5, 6], gamma=gamma, samples=6)
        ok &= all(keys <= set(r) for r in reps) and all(r["c1"] > 0 for r in reps)
        ratios.append(eps_stability([r["c1"] for r in reps]))
    ok &= all(q < 2 for q in ratios)
    record(11, ok, f"P1-P6 reported; c1 max/min over eps: diffusion {ratios[0]:.3f}, "
           f"stable {ratios[1]:.3f}", t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
