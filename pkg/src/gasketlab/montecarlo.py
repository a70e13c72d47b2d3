"""Path simulation of (subordinate) walks on gasket graphs and Feynman-Kac estimators.

Two schemes are available.

* "jump_chain": the subordinate walk is itself a continuous-time Markov
  chain with generator phi(H); in the function gauge its off-diagonal rates
  are -A[x, y] sqrt(m(y) / m(x)) with A the symmetric-gauge matrix.  Paths are
  simulated exactly (holding times, jumps, killing, occupation times).
* "time_change": the walk Z runs on an operational clock driven by sampled
  subordinator increments on a physical grid of step 5**-n.  Positions at
  grid times are exact in law; occupation times use the left endpoint of each
  step, so the Feynman-Kac weight carries an O(5**-n) bias.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CapacityError, ValidationError
from .gasket import D_W, GasketGraph
from .operators import DIRICHLET, REFLECTED, Generator, SchrodingerProblem, bm_ground
from .potentials import annealed_fk_weight, r_w, s_w, sample_cloud
from .rng import stream
from .subordinators import PureDrift

BIG_JUMP = 64           # above this many walk steps use the exact kernel row


@dataclass
class PathSample:
    """Occupation data of a batch of paths.

    ell: (len(times), n_paths, nv) occupation times up to each requested time.
    alive: (len(times), n_paths) survival indicator (Dirichlet killing).
    final: (len(times), n_paths) vertex at each requested time (-1 if killed).
    increments: subordinator increments per grid step (time-change scheme).
    """
    times: np.ndarray
    ell: np.ndarray
    alive: np.ndarray
    final: np.ndarray
    increments: np.ndarray = None
    steps: int = 0


def jump_rates(problem):
    """Off-diagonal rate matrix and total exit rates of the chain with generator phi(H).

    For Dirichlet problems the rows lose mass at the corners (killing rate).
    Indices refer to the problem's kept vertices.
    """
    A = problem.base()
    sm = np.sqrt(problem.mass)
    G = A * (sm[None, :] / sm[:, None])
    R = -G.copy()
    np.fill_diagonal(R, 0.0)
    R = np.maximum(R, 0.0)
    total = np.diag(G).copy()
    return R, np.maximum(total, R.sum(axis=1))


def simulate_jump_chain(problem, x0, times, n_paths, rng, record=True):
    """Exact simulation of the (killed) subordinate walk.

    Args:
        problem: SchrodingerProblem (its potential is ignored).
        x0: starting vertex id (graph numbering).
        times: increasing array of times at which occupation is recorded.
        n_paths: number of paths.
        rng: numpy Generator.
    """
    times = np.asarray(sorted(times), dtype=float)
    if times[0] < 0:
        raise ValidationError("times must be non-negative")
    keep = problem.keep
    pos_of = -np.ones(problem.g.nv, dtype=np.int64)
    pos_of[keep] = np.arange(len(keep))
    if pos_of[x0] < 0:
        raise ValidationError("start vertex is not in the domain")
    R, total = jump_rates(problem)
    # padded per-row target lists and cumulative rates (sparse rows for a drift)
    nnz = R > 0
    width = max(1, int(nnz.sum(axis=1).max()))
    targets = np.zeros((len(R), width), dtype=np.int64)
    cum = np.full((len(R), width), np.inf)
    for a in range(len(R)):
        tg = np.flatnonzero(nnz[a])
        targets[a, :len(tg)] = tg
        cum[a, :len(tg)] = np.cumsum(R[a, tg])
    jump_total = R.sum(axis=1)
    nv = problem.g.nv
    ell = np.zeros((len(times), n_paths, nv)) if record else None
    alive = np.ones((len(times), n_paths), dtype=bool)
    final = -np.ones((len(times), n_paths), dtype=np.int64)
    state = np.full(n_paths, pos_of[x0])
    clock = np.zeros(n_paths)
    live = np.ones(n_paths, dtype=bool)
    active = np.arange(n_paths)
    steps = 0
    while len(active):
        s = state[active]
        hold = rng.exponential(1.0, len(active)) / total[s]
        t0 = clock[active]
        t1 = t0 + hold
        if record:
            for k, T in enumerate(times):
                dt = np.clip(np.minimum(t1, T) - t0, 0.0, None)
                np.add.at(ell[k], (active, keep[s]), dt)
        for k, T in enumerate(times):
            ends = (t1 > T) & (t0 <= T)
            final[k, active[ends]] = keep[s[ends]]
        clock[active] = t1
        done = t1 > times[-1]
        # jump or die
        go = ~done
        idx = active[go]
        sg = s[go]
        u = rng.uniform(size=len(idx)) * total[sg]
        stay = u < jump_total[sg]
        ss, us = sg[stay], u[stay]
        col = np.minimum((cum[ss] <= us[:, None]).sum(axis=1), width - 1)
        state[idx[stay]] = targets[ss, col]
        dead = idx[~stay]
        live[dead] = False
        for k, T in enumerate(times):
            killed_before = clock[dead] <= T
            alive[k, dead[killed_before]] = False
        active = idx[stay]
        steps += 1
    return PathSample(times, ell, alive, final, steps=steps)


def simulate_time_change(g, phi, x0, times, n_paths, rng, dt=None, mode=REFLECTED, kappa=1.0):
    """Grid time-change scheme X_s = Z(S_s) on a physical grid of step dt.

    Occupation uses the left endpoint of each step.  For a pure drift every
    intermediate walk state is checked for killing; for jump subordinators
    only grid positions are (the walk is skipped over during a jump).
    """
    gen = Generator(g, REFLECTED, kappa)
    rate = gen.rate
    dt = dt or 5.0 ** (-g.n)
    times = np.asarray(sorted(times), dtype=float)
    T = times[-1]
    nsteps = int(np.ceil(T / dt - 1e-12))
    grid = np.minimum(np.arange(nsteps + 1) * dt, T)
    # make sure every requested time is a grid point
    grid = np.unique(np.concatenate([grid, times]))
    nbr = g.adjacency.tolil().rows
    nbr_pad = np.full((g.nv, 4), -1, dtype=np.int64)
    for v, row in enumerate(nbr):
        nbr_pad[v, :len(row)] = row
    deg = g.deg
    killing = np.zeros(g.nv, dtype=bool)
    if mode == DIRICHLET:
        killing[g.corners] = True
    drift_only = isinstance(phi, PureDrift)
    ell = np.zeros((len(times), n_paths, g.nv))
    alive = np.ones((len(times), n_paths), dtype=bool)
    final = -np.ones((len(times), n_paths), dtype=np.int64)
    state = np.full(n_paths, x0, dtype=np.int64)
    live = np.ones(n_paths, dtype=bool)
    incs = np.zeros((len(grid) - 1, n_paths))
    spec = None
    tk = 0
    for k in range(len(grid) - 1):
        h = grid[k + 1] - grid[k]
        for j, tt in enumerate(times):
            if grid[k] < tt:
                np.add.at(ell[j], (np.flatnonzero(live), state[live]), h)
        dS = phi.sample(rng, h, n_paths)
        incs[k] = dS
        N = rng.poisson(rate * dS)
        small = live & (N <= BIG_JUMP)
        for step in range(int(N[small].max(initial=0))):
            mv = small & (N > step)
            s = state[mv]
            pick = (rng.uniform(size=len(s)) * deg[s]).astype(np.int64)
            state[mv] = nbr_pad[s, pick]
            if drift_only and mode == DIRICHLET:
                hit = mv.copy()
                hit[mv] = killing[state[mv]]
                live &= ~hit
                small &= ~hit
        big = np.flatnonzero(live & (N > BIG_JUMP))
        if len(big):
            if spec is None:
                if g.nv > 3000:
                    raise CapacityError("exact kernel rows need a dense spectrum")
                spec = gen.spectrum()
                E = spec.efuncs
            for p in big:
                row = (E[state[p]] * np.exp(-dS[p] * spec.values)) @ E.T * g.mass
                row = np.clip(row, 0, None)
                state[p] = rng.choice(g.nv, p=row / row.sum())
        if mode == DIRICHLET:
            live &= ~killing[state]
        while tk < len(times) and np.isclose(grid[k + 1], times[tk]):
            alive[tk] = live
            final[tk] = np.where(live, state, -1)
            tk += 1
    return PathSample(times, ell, alive, final, increments=incs, steps=len(grid) - 1)


def kernel_histogram_test(problem, x0, t, n_paths, rng, scheme="jump_chain", min_expected=5.0):
    """Chi-square test of simulated X_t against the spectral kernel row.

    Returns (statistic, p-value, degrees of freedom).
    """
    g = problem.g
    if scheme == "jump_chain":
        ps = simulate_jump_chain(problem, x0, [t], n_paths, rng, record=False)
    else:
        ps = simulate_time_change(g, problem.phi, x0, [t], n_paths, rng, mode=problem.mode)
    p = problem.kernel(t)
    xi = np.flatnonzero(problem.keep == x0)[0]
    prob = p[xi] * problem.mass
    expected = np.append(prob, max(0.0, 1 - prob.sum())) * n_paths
    pos_of = -np.ones(g.nv, dtype=np.int64)
    pos_of[problem.keep] = np.arange(problem.dim)
    fin = ps.final[0]
    obs = np.bincount(np.where(fin >= 0, pos_of[np.maximum(fin, 0)], problem.dim),
                      minlength=problem.dim + 1).astype(float)
    # pool sparse bins
    order = np.argsort(expected)
    e_s, o_s = expected[order], obs[order]
    bins_e, bins_o, acc_e, acc_o = [], [], 0.0, 0.0
    for e, o in zip(e_s, o_s):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            bins_e.append(acc_e)
            bins_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 and bins_e:
        bins_e[-1] += acc_e
        bins_o[-1] += acc_o
    bins_e, bins_o = np.array(bins_e), np.array(bins_o)
    bins_e *= bins_o.sum() / bins_e.sum()
    res = stats.chisquare(bins_o, bins_e)
    return float(res.statistic), float(res.pvalue), len(bins_e) - 1


def subordinated_heat_mc(gen, phi, t, n_samples, rng, pairs=None):
    """Average the walk's heat kernel over sampled S_t.

    Returns (mean, standard error) for the requested (x, y) index pairs (all
    pairs if None) together with the exact subordinate kernel for comparison.
    """
    sp = gen.spectrum()
    E = sp.efuncs
    u = phi.sample(rng, t, n_samples)
    ex = np.exp(-np.outer(u, sp.values))               # (n, K)
    if pairs is None:
        ii, jj = np.meshgrid(np.arange(gen.dim), np.arange(gen.dim), indexing="ij")
        pairs = np.stack([ii.ravel(), jj.ravel()], axis=1)
    pairs = np.asarray(pairs)
    B = E[pairs[:, 0]] * E[pairs[:, 1]]                 # (npairs, K)
    vals = ex @ B.T                                     # (n, npairs)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
    exact = B @ np.exp(-t * np.asarray(phi(sp.values)))
    return mean, se, exact


def tail_probability(phi, t, A, n_samples, rng):
    """Empirical P(S_t > A) and its standard error."""
    x = phi.sample(rng, t, n_samples) > A
    p = x.mean()
    return float(p), float(np.sqrt(max(p * (1 - p), 1e-300) / n_samples))


def fk_survival(problem, profile, nu, x0, times, n_paths, rng_paths, rng_clouds, W=None):
    """Annealed survival E_Q E_x[exp(-int_0^t V(X_s) ds)] by two estimators.

    (A) Rao-Blackwellised: exponential formula averaged over paths.
    (B) explicit clocks: a fresh cloud per path, an Exp(1) threshold per point;
        the path survives if every point's accumulated W stays below its threshold.

    The process is the subordinate walk of `problem` (reflected or killed);
    killed paths contribute zero.  Returns a dict of arrays over `times`.
    """
    g = problem.g
    W = profile.matrix(g) if W is None else W
    ps = simulate_jump_chain(problem, x0, times, n_paths, rng_paths)
    out = dict(t=np.asarray(ps.times), A=[], se_A=[], B=[], se_B=[])
    clouds = [sample_cloud(g, nu, rng_clouds) for _ in range(n_paths)]
    thresholds = [rng_clouds.exponential(1.0, len(c)) for c in clouds]
    for k in range(len(ps.times)):
        L = ps.ell[k]
        a = np.array([annealed_fk_weight(g, profile, nu, L[p], W=W) for p in range(n_paths)])
        a *= ps.alive[k]
        b = np.zeros(n_paths)
        for p in range(n_paths):
            if not ps.alive[k, p]:
                continue
            c = clouds[p]
            if len(c) == 0:
                b[p] = 1.0
                continue
            acc = L[p] @ W[:, c.vertices(g)]
            b[p] = float(np.all(acc < thresholds[p]))
        out["A"].append(a.mean())
        out["se_A"].append(a.std(ddof=1) / np.sqrt(n_paths))
        out["B"].append(b.mean())
        out["se_B"].append(b.std(ddof=1) / np.sqrt(n_paths))
    return {k: np.asarray(v) for k, v in out.items()}


def dirichlet_survival(problem, x0, times, n_paths, rng):
    """P_x[tau > t] by simulation and from the killed kernel (spectral)."""
    ps = simulate_jump_chain(problem, x0, times, n_paths, rng, record=False)
    xi = np.flatnonzero(problem.keep == x0)[0]
    sp = problem.spectrum()
    E = sp.efuncs
    exact = [float((E[xi] * np.exp(-t * sp.values)) @ (E.T @ problem.mass)) for t in ps.times]
    mc = ps.alive.mean(axis=1)
    se = np.sqrt(np.maximum(mc * (1 - mc), 1e-300) / n_paths)
    return mc, se, np.array(exact)


__all__ = ["PathSample", "simulate_jump_chain", "simulate_time_change", "kernel_histogram_test",
           "subordinated_heat_mc", "tail_probability", "fk_survival", "dirichlet_survival",
           "jump_rates", "ground_ratio", "survival_bound_check", "exit_floor_check",
           "clock_identity"]


def ground_ratio(phi, M, n, x_lattice):
    """phi_1(x) / max phi_1 for the killed subordinate walk on G_M.

    P_x[tau > t] >= exp(-t lam_1) phi_1(x) / max phi_1, because P_t phi_1 =
    exp(-t lam_1) phi_1 and phi_1 <= max phi_1.
    """
    g = GasketGraph(M, n)
    prob = SchrodingerProblem(g, phi, mode=DIRICHLET)
    lam, f = prob.principal()
    v = g.index(x_lattice)
    pos = np.flatnonzero(prob.keep == v)
    val = float(f[pos[0]]) if len(pos) else 0.0
    return max(val, 0.0) / float(f.max()), lam


def survival_bound_check(phi, profile, nu, host, n, tgrid, n_paths, seed, x_lattice=None):
    """Annealed survival of the subordinate walk on the reflected host G_host
    with certificates.

    lower: c(x) exp(-t phi(2**(-M d_w) lam1) - nu t s_w(a) - nu (3**M + 9 a**d)),
           M = M(t), a = t**(1/(d+theta)), c(x) the ground-state ratio on G_M.
    upper: exp(-nu r_w(a, t)).
    The start vertex defaults to the lattice point (1/4)(e1 + e2), which lies
    in the ball of radius 1/2 about the origin and so in G_M/2 for every M >= 0.
    """
    from .ids import lower_rhs, scale_for

    g = GasketGraph(host, n)
    x_lattice = x_lattice if x_lattice is not None else (1 << max(n - 2, 0), 1 << max(n - 2, 0))
    x0 = int(g.index(x_lattice))
    tgrid = np.asarray(sorted(tgrid), dtype=float)
    prob = SchrodingerProblem(g, phi, mode=REFLECTED)
    W = profile.matrix(g)
    surv = fk_survival(prob, profile, nu, x0, tgrid, n_paths, stream(seed, "paths"),
                       stream(seed, "clouds"), W=W)
    sw = lambda a: s_w(g, profile, a)  # noqa: E731
    rows = []
    for k, t in enumerate(tgrid):
        M = scale_for(t, nu, phi.beta) if nu > 0 else host
        M = min(max(M, 0), host)
        c_x, lam_x = ground_ratio(phi, M, n, x_lattice)
        lo, info = lower_rhs(phi, sw, nu, t, M, n, profile.theta)
        a = info["a"]
        up = float(np.exp(-nu * r_w(g, profile, a, t)))
        rows.append(dict(t=t, A=surv["A"][k], se_A=surv["se_A"][k], B=surv["B"][k],
                         se_B=surv["se_B"][k], lower_rhs=c_x * lo, upper_rhs=up, M=M,
                         ground_ratio=c_x, lam1_killed=lam_x, **{k2: info[k2] for k2 in ("a", "lam1", "s_w")}))
    return rows


def exit_floor_check(phi, M, n, tgrid, x_lattice, n_paths, seed):
    """nu = 0: P_x[tau > t] for the killed subordinate walk on G_M, simulated and
    spectral, against c(x) exp(-t phi(2**(-M d_w) lam1))."""
    g = GasketGraph(M, n)
    prob = SchrodingerProblem(g, phi, mode=DIRICHLET)
    x0 = int(g.index(x_lattice))
    mc, se, exact = dirichlet_survival(prob, x0, tgrid, n_paths, stream(seed, "exit"))
    c_x, _ = ground_ratio(phi, M, n, x_lattice)
    lam = 2.0 ** (-M * D_W) * bm_ground(n + M)
    floor = c_x * np.exp(-np.asarray(sorted(tgrid)) * float(phi(lam)))
    return dict(t=np.asarray(sorted(tgrid)), mc=mc, se=se, spectral=exact, floor=floor)


def clock_identity(g, profile, ell, cloud, n_draws, rng):
    """Empirical P[T > t] over exponential clocks for a fixed path and cloud,
    and the target exp(-int V)."""
    v = cloud.vertices(g)
    acc = ell @ profile.matrix(g, np.arange(g.nv), v)      # per-point additive functionals
    marks = rng.exponential(1.0, size=(n_draws, len(v)))
    surv = np.all(marks > acc[None, :], axis=1)
    p = surv.mean()
    return float(p), float(np.sqrt(max(p * (1 - p), 1e-300) / n_draws)), float(np.exp(-acc.sum()))
