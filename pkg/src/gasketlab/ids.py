"""Annealed spectral statistics of Poissonian Schrodinger operators on gasket triangles.

Everything is driven by replicate clouds drawn from per-replicate RNG streams,
so the same seed gives the same clouds in every routine (common random
numbers across M, t and the two sides of each bound).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import floor, log2

import numpy as np

from .errors import CapacityError, SolverError, ValidationError
from .gasket import D_F, D_W, GasketGraph
from .operators import (DENSE_CAP, DIRICHLET, REFLECTED, SUB_FIRST, Generator,
                        SchrodingerProblem, bm_ground, trace_laplace)
from .potentials import periodize, r_w, rescaled_periodize, s_w, sample_cloud
from .rng import stream
from .subordinators import PureDrift, StableWithDrift

N_BOOT = 400


def _map(fn, items, threads=1):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _boot_se(rows, rng, n_boot=N_BOOT):
    """Bootstrap standard error of the column means of a (R, k) array."""
    rows = np.asarray(rows, dtype=float)
    R = len(rows)
    if R < 2:
        return np.zeros(rows.shape[1:])
    idx = rng.integers(0, R, size=(n_boot, R))
    return rows[idx].mean(axis=1).std(axis=0, ddof=1)


@dataclass
class Family:
    """Random Schrodinger operators phi(H) + V_omega on G_M.

    The cloud lives on G_host (host >= M, same resolution); V on G_M sees every
    host point, so Dirichlet problems feel obstacles just outside the box.

    Args:
        M, n: box scale and resolution.
        phi: Laplace exponent.
        profile: interaction profile.
        nu: Poisson intensity.
        mode, order, kappa: operator options (see SchrodingerProblem).
        host: scale of the cloud domain (default M).
    """
    M: int
    n: int
    phi: object
    profile: object
    nu: float
    mode: str = DIRICHLET
    order: str = SUB_FIRST
    kappa: float = 1.0
    host: int = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.host is None:
            self.host = self.M
        if self.host < self.M:
            raise ValidationError("cloud host must contain the box")
        if self.nu < 0:
            raise ValidationError("intensity must be non-negative")

    @property
    def g(self):
        if "g" not in self._cache:
            self._cache["g"] = GasketGraph(self.M, self.n)
        return self._cache["g"]

    @property
    def g_host(self):
        if self.host == self.M:
            return self.g
        if "gh" not in self._cache:
            self._cache["gh"] = GasketGraph(self.host, self.n)
        return self._cache["gh"]

    @property
    def problem(self):
        if "prob" not in self._cache:
            if self.g.nv > DENSE_CAP:
                raise CapacityError(f"full spectra need dimension <= {DENSE_CAP}, got {self.g.nv}")
            self._cache["prob"] = SchrodingerProblem(self.g, self.phi, self.mode, self.order, self.kappa)
        return self._cache["prob"]

    @property
    def W_rows(self):
        """W(x, y) for x in G_M and y in the host."""
        if "W" not in self._cache:
            gh = self.g_host
            self._cache["W"] = self.profile.matrix(gh, gh.index(self.g.ij), np.arange(gh.nv))
        return self._cache["W"]

    def cloud(self, seed, r):
        return sample_cloud(self.g_host, self.nu, stream(seed, "cloud", r))

    def potential(self, cloud):
        if len(cloud) == 0:
            return np.zeros(self.g.nv)
        return self.W_rows[:, cloud.vertices(self.g_host)].sum(axis=1)

    def eigenvalues(self, seed, r):
        return self.problem.eigvalsh(self.potential(self.cloud(seed, r)))

    def spectra(self, reps, seed, threads=1):
        """Eigenvalue arrays of replicates 0..reps-1."""
        self.problem.base()           # build the shared operator once
        _ = self.W_rows
        return _map(lambda r: self.eigenvalues(seed, r), range(reps), threads)


# -- Laplace transforms ---------------------------------------------------

@dataclass
class LaplaceCurve:
    t: np.ndarray
    L: np.ndarray
    se: np.ndarray
    per_rep: np.ndarray


def curve_from_spectra(spectra, tgrid, M, seed=0):
    tgrid = np.asarray(tgrid, dtype=float)
    rows = np.array([trace_laplace(ev, tgrid, M) for ev in spectra])
    se = _boot_se(rows, stream(seed, "bootstrap"))
    return LaplaceCurve(tgrid, rows.mean(axis=0), se, rows)


def annealed_laplace(family, tgrid, reps, seed, threads=1, spectra=None):
    """E_Q of (1/3**M) Tr exp(-t(phi(H) + V)) with bootstrap standard errors."""
    spectra = spectra if spectra is not None else family.spectra(reps, seed, threads)
    return curve_from_spectra(spectra, tgrid, family.M, seed)


def empirical_ids(spectra, M, xgrid):
    """Pooled normalised counting function l([0, x]) and raw counts."""
    pooled = np.sort(np.concatenate(spectra))
    counts = np.searchsorted(pooled, np.asarray(xgrid, dtype=float), side="right")
    return counts / (len(spectra) * 3.0 ** M), counts


def laplace_from_counting(spectra, M, t):
    """int exp(-t x) dl(x) computed by parts from the pooled counting function.

    Between consecutive atoms x_k < x_{k+1} the counting function is constant,
    so the integral is sum_k l([0, x_k]) (e^{-t x_k} - e^{-t x_{k+1}}).
    """
    pooled = np.sort(np.concatenate(spectra))
    x, cnt = np.unique(pooled, return_counts=True)
    F = np.cumsum(cnt) / (len(spectra) * 3.0 ** M)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    e = np.exp(-np.outer(t, x))
    return (F[None, :] * (e - np.concatenate([e[:, 1:], np.zeros((len(t), 1))], axis=1))).sum(axis=1)


def free_trace(g, phi, mode=DIRICHLET, order=SUB_FIRST, tgrid=(1.0,)):
    return trace_laplace(SchrodingerProblem(g, phi, mode, order).eigvalsh(), tgrid, g.M)


def convergence_study(phi, profile, nu, Ms, n, tgrid, reps, seed, threads=1):
    """E_Q L^D_M(t) for several M, clouds shared through the largest host.

    Returns a list of dicts with keys M, t, L, se, diff, diff_se (difference
    to the previous M, coupled replicate-wise).
    """
    Ms = sorted(Ms)
    host = Ms[-1]
    curves = {}
    for M in Ms:
        fam = Family(M, n, phi, profile, nu, host=host)
        curves[M] = annealed_laplace(fam, tgrid, reps, seed, threads)
    out = []
    rng = stream(seed, "bootstrap-diff")
    for k, M in enumerate(Ms):
        c = curves[M]
        row = dict(M=M, t=c.t, L=c.L, se=c.se, diff=None, diff_se=None)
        if k:
            d = c.per_rep - curves[Ms[k - 1]].per_rep
            row["diff"] = d.mean(axis=0)
            row["diff_se"] = _boot_se(d, rng)
        out.append(row)
    return out


# -- periodized (reflected) transforms ----------------------------------------

def periodized_traces(phi, profile, nu, M, n, tgrid, reps, seed, K=None, host=None, threads=1):
    """Per-replicate (1/3**M) Tr exp(-t(phi(H^M) + V*_M)) for reflected G_M.

    Clouds are drawn on G_host (host >= M) from the shared streams and
    restricted to G_M before periodization over G_K.
    """
    host = M if host is None else host
    K = M + 2 if K is None else K
    gM, gh, gK = GasketGraph(M, n), GasketGraph(host, n), GasketGraph(K, n)
    prob = SchrodingerProblem(gM, phi, mode=REFLECTED)
    prob.base()
    tgrid = np.asarray(tgrid, dtype=float)

    def one(r):
        cloud = sample_cloud(gh, nu, stream(seed, "cloud", r)).restrict(M)
        V, _ = periodize(gM, profile, cloud, K, tail_tol=np.inf, gK=gK)
        return trace_laplace(prob.eigvalsh(V), tgrid, M)

    return np.array(_map(one, range(reps), threads))


def coupled_monotonicity(phi, profile, nu, n, tgrid, reps, seed, host=1, K=3, threads=1):
    """E L^{N*}_0, E L^{N*}_1 and E L^D_1 on shared clouds.

    Returns a dict of arrays over t: N0, N1, D1 and their SEs, plus the coupled
    differences N0 - N1 and N1 - D1 with their SEs.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    N0 = periodized_traces(phi, profile, nu, 0, n, tgrid, reps, seed, K=K, host=host, threads=threads)
    N1 = periodized_traces(phi, profile, nu, 1, n, tgrid, reps, seed, K=K, host=host, threads=threads)
    fam = Family(1, n, phi, profile, nu, host=host)
    D1 = annealed_laplace(fam, tgrid, reps, seed, threads).per_rep
    rng = stream(seed, "bootstrap")
    out = dict(t=tgrid)
    for name, rows in (("N0", N0), ("N1", N1), ("D1", D1), ("N0_N1", N0 - N1), ("N1_D1", N1 - D1)):
        out[name] = rows.mean(axis=0)
        out[name + "_se"] = _boot_se(rows, rng)
    return out


# -- bound certificates -------------------------------------------------------

def scale_for(t, nu, index):
    """Largest integer M with 2**M <= (t / nu)**(1 / (d + index))."""
    if t <= 0 or nu <= 0:
        raise ValidationError("need t > 0 and nu > 0")
    return int(floor(log2(t / nu) / (D_F + index) + 1e-12))


def lower_rhs(phi, profile_sw, nu, t, M, n, theta):
    """exp{-t phi(2**(-M d_w) lam1) - nu t s_w(a) - nu (3**M + 9 a**d)}, a = t**(1/(d+theta)).

    lam1 is the Dirichlet ground state of the walk on G_0 at resolution n + M,
    so that 2**(-M d_w) lam1 is the matched ground state of G_M at resolution n.
    `profile_sw` is the callable a -> s_w(a).
    """
    a = t ** (1.0 / (D_F + theta))
    lam = 2.0 ** (-M * D_W) * bm_ground(n + M)
    sw = profile_sw(a) if nu > 0 else 0.0
    expo = -t * float(phi(lam)) - nu * t * sw - nu * (3.0 ** M + 9 * a ** D_F)
    return float(np.exp(expo)), dict(a=a, M=M, lam1=lam, s_w=sw, log_rhs=float(expo))


def lower_certificate(family, tgrid, reps, seed, curve=None, threads=1):
    """Lower certificate against the annealed Dirichlet transform on the family's box.

    Rows for t with M(t) < 0 or M(t) > family.M are marked not applicable.
    """
    phi, prof = family.phi, family.profile
    beta = phi.beta
    curve = curve or annealed_laplace(family, tgrid, reps, seed, threads)
    g = family.g_host
    sw = lambda a: s_w(g, prof, a)  # noqa: E731
    rows = []
    for k, t in enumerate(curve.t):
        M = scale_for(t, family.nu, beta) if family.nu > 0 else family.M
        ok = 0 <= M <= family.M
        rhs, info = lower_rhs(phi, sw, family.nu, t, M, family.n, prof.theta) if ok else (np.nan, {})
        rows.append(dict(t=t, Lhat=curve.L[k], se=curve.se[k], rhs=rhs, applicable=ok,
                         margin=curve.L[k] - rhs if ok else np.nan, **info))
    return rows


def kernel_sup(g, phi, t=1.0):
    """sup_x p(t, x, x) of the reflected subordinate walk on g."""
    p = SchrodingerProblem(g, phi, mode=REFLECTED).kernel(t)
    return float(np.max(np.diag(p)))


def upper_long_range(family, tgrid, reps, seed, curve=None, c_hat=None, threads=1):
    """L_hat(t) <= c_hat exp(-nu r_w(a, t)) with a = t**(1/(d+theta))."""
    if family.phi.regime is None:
        raise ValidationError("upper bounds do not cover exponents outside U1-U3")
    curve = curve or annealed_laplace(family, tgrid, reps, seed, threads)
    c_hat = kernel_sup(family.g, family.phi) if c_hat is None else c_hat
    g = family.g_host
    rows = []
    for k, t in enumerate(curve.t):
        a = t ** (1.0 / (D_F + family.profile.theta))
        rw = r_w(g, family.profile, a, t)
        rhs = c_hat * np.exp(-family.nu * rw)
        rows.append(dict(t=t, Lhat=curve.L[k], se=curve.se[k], rhs=rhs, a=a, r_w=rw,
                         c_hat=c_hat, margin=rhs - curve.L[k]))
    return rows


def operator_floor(phi, values, gamma):
    """Largest c in (0, 1] with phi(lam) >= c lam**(gamma/d_w) on the given spectrum."""
    w = np.asarray(values)
    pos = w > 1e-12 * w.max()
    return float(min(1.0, np.min(phi(w[pos]) / w[pos] ** (gamma / D_W))))


def upper_reduction_check(phi, profile, nu, t, n, reps, seed, M=None, K=None, threads=1):
    """Both sides of the periodized-trace reduction, replicate by replicate.

    lhs_r = (1/3**M) Tr exp(-t(phi(H^M) + V*_M))
    rhs_r = c_hat exp(-c (1 - 1/t) s lam1^0(g, V*_{0,M,g} / c)),
    s = min(nu**(g/(d+g)) t**(d/(d+g)), t 2**(-M g))

    with g = d_w under U1 and alpha1 otherwise, c the operator floor of phi
    against lam**(g/d_w) on the spectrum of H^M (c = b under U1) and
    c_hat = sup_x p^M(1, x, x).  lam1^0(g, .) is the reflected principal
    eigenvalue on G_0 at resolution n + M (g-stable, or the walk when g = d_w).
    """
    reg = phi.regime
    if reg is None:
        raise ValidationError("the reduction needs one of U1, U2, U3")
    gam = phi.gamma_index
    M = scale_for(t, nu, gam) if M is None else M
    M = max(M, 0)
    K = M + 2 if K is None else K
    gM = GasketGraph(M, n)
    g0 = GasketGraph(0, n + M)
    prob = SchrodingerProblem(gM, phi, mode=REFLECTED)
    if reg == "U1":
        c = phi.b
        ref = PureDrift(1.0)
    else:
        c = operator_floor(phi, Generator(gM).spectrum().values, gam)
        ref = StableWithDrift(0.0, gam)
    prob0 = SchrodingerProblem(g0, ref, mode=REFLECTED)
    c_hat = kernel_sup(gM, phi)
    gK = GasketGraph(K, n)
    # 2**(-M g) t >= nu**(g/(d+g)) t**(d/(d+g)) only while 2**M <= (t/nu)**(1/(d+g));
    # when M is clamped at 0 the scale-0 comparison t * 2**(-M g) is used instead
    speed = min(nu ** (gam / (D_F + gam)) * t ** (D_F / (D_F + gam)), t * 2.0 ** (-M * gam))
    expo = c * (1 - 1 / t) * speed

    def one(r):
        cloud = sample_cloud(gM, nu, stream(seed, "cloud", r))
        V, _ = periodize(gM, profile, cloud, K, tail_tol=np.inf, gK=gK)
        lhs = trace_laplace(prob.eigvalsh(V), [t], M)[0]
        Vt = rescaled_periodize(M, n, profile, gam, cloud.scaled(M), K) / c
        lam0, _ = prob0.principal(Vt)
        return lhs, c_hat * np.exp(-expo * lam0)

    res = np.array(_map(one, range(reps), threads))
    return dict(M=M, c=c, c_hat=c_hat, gamma=gam, lhs=res[:, 0], rhs=res[:, 1],
                margin=res[:, 1] - res[:, 0])


# -- Lifschitz exponents ------------------------------------------------------

@dataclass
class Fit:
    slope: float
    ci: tuple
    window: tuple
    npts: int
    mode: str
    intercept: float = 0.0


def _ols(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (s, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    return s, c


def lifschitz_fit_laplace(tgrid, per_rep, window=(4.0, 64.0), n_boot=N_BOOT, seed=0, level=0.95):
    """Slope of log(-log L(t)) against log t (estimates d/(d+gamma)).

    per_rep: (R, len(tgrid)) replicate transforms, or a single curve.
    """
    t = np.asarray(tgrid, dtype=float)
    rows = np.atleast_2d(np.asarray(per_rep, dtype=float))
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 5:
        raise ValidationError("fewer than 5 grid points in the fit window")
    L = rows[:, sel]
    mean = L.mean(axis=0)
    if np.any(mean <= 0) or np.any(mean >= 1):
        raise SolverError("transform outside (0, 1) in the fit window")
    x = np.log(t[sel])
    f = lambda m: _ols(x, np.log(-np.log(m)))  # noqa: E731
    s, c = f(mean)
    ci = _boot_ci(rows[:, sel], f, n_boot, stream(seed, "fit"), level, s)
    return Fit(float(s), ci, tuple(window), int(sel.sum()), "laplace", float(c))


def lifschitz_fit_measure(spectra, M, xgrid, n_boot=N_BOOT, seed=0, level=0.95):
    """Slope of log(-log l([0, x])) against log(1/x) (estimates d/gamma)."""
    xgrid = np.asarray(xgrid, dtype=float)
    if len(xgrid) < 5:
        raise ValidationError("fewer than 5 grid points in the fit window")
    counts = np.array([np.searchsorted(np.sort(ev), xgrid, side="right") for ev in spectra])
    norm = 3.0 ** M
    mean = counts.mean(axis=0) / norm
    if np.any(mean <= 0):
        raise SolverError("empty counts in the fit window")
    if np.any(mean >= 1):
        raise SolverError("counting function reaches 1 inside the window")
    x = np.log(1 / xgrid)
    f = lambda m: _ols(x, np.log(-np.log(m)))  # noqa: E731
    s, c = f(mean)
    ci = _boot_ci(counts / norm, f, n_boot, stream(seed, "fit"), level, s)
    return Fit(float(s), ci, (float(xgrid.min()), float(xgrid.max())), len(xgrid), "measure", float(c))


def _boot_ci(rows, f, n_boot, rng, level, s):
    R = len(rows)
    if R < 2:
        return (float(s), float(s))
    vals = []
    for _ in range(n_boot):
        m = rows[rng.integers(0, R, R)].mean(axis=0)
        if np.all(m > 0) and np.all(m < 1):
            vals.append(f(m)[0])
    if not vals:
        return (np.nan, np.nan)
    q = (1 - level) / 2
    return (float(np.quantile(vals, q)), float(np.quantile(vals, 1 - q)))


def log_grid(a, b, steps):
    """Geometric grid a * (b/a)**(k/(steps-1)); exact at powers of the ratio."""
    steps = int(steps)
    if steps == 1:
        return np.array([float(a)])
    return float(a) * (float(b) / float(a)) ** (np.arange(steps) / (steps - 1))


def quantile_window(spectra, M, lo=1e-3, hi=0.1, steps=9):
    """Log grid between the energies where the pooled counting function
    (normalized by 3**M) reaches lo and hi."""
    pooled = np.sort(np.concatenate(spectra))
    N = len(spectra) * 3.0 ** M
    ka, kb = int(lo * N), int(hi * N)
    if not 0 <= ka < kb < len(pooled):
        raise ValidationError("quantile window outside the pooled spectrum")
    return log_grid(pooled[ka], pooled[kb], steps)


__all__ = [
    "Family", "LaplaceCurve", "annealed_laplace", "curve_from_spectra", "empirical_ids",
    "laplace_from_counting", "free_trace", "convergence_study", "periodized_traces",
    "coupled_monotonicity", "scale_for", "lower_rhs", "lower_certificate", "kernel_sup",
    "upper_long_range", "operator_floor", "upper_reduction_check", "Fit",
    "lifschitz_fit_laplace", "lifschitz_fit_measure", "log_grid", "quantile_window",
]
