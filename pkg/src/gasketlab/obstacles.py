"""Enlargement of obstacles on G_0: good and bad points, coarse domains,
eigenvalue comparison and probes of the recurrence assumptions.

Scale conventions.  For eps = 2**-M the setup lives on G_0 at resolution
M + n_base, which is the lattice of G_M at resolution n_base; the small
profile W_eps(x, y) = eps**-gamma W(x/eps, y/eps) is therefore resolved the
same way at every eps.  The cloud has intensity 3**M nu on G_0.

The diffusion branch (gamma = d_w) uses sparse operators; the jump branch
(gamma < d_w, the gamma-stable exponent) needs dense ones and is limited to
small graphs.
"""
from dataclasses import dataclass, field
from math import ceil, log, log2

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import CapacityError, SolverError, ValidationError
from .gasket import D_F, D_W, GasketGraph
from .operators import DENSE_CAP, REFLECTED, Generator, SchrodingerProblem, principal_sparse
from .potentials import Scaled, indicator, sample_cloud
from .rng import stream
from .subordinators import PureDrift, StableWithDrift

HOP_EPS = 1e-9


def hop_radius(g, r):
    """Largest hop count h with h * 2**-n <= r."""
    return int(np.floor(r * 2.0 ** g.n + HOP_EPS))


def ball_hops(g, centers, h):
    """Hop distances from `centers`, cut off beyond h (inf there)."""
    if len(centers) == 0:
        return np.zeros((0, g.nv))
    return csgraph.dijkstra(g.adjacency, indices=np.asarray(centers), unweighted=True, limit=h + 0.5)


def doubling_constant(g, r0, samples=200, rng=None):
    """max m(B(x, r)) / m(B(x, r/3)) over sampled x and dyadic r in [3 h, r0)."""
    rng = rng or np.random.default_rng(0)
    xs = rng.choice(g.nv, size=min(samples, g.nv), replace=False)
    d = g.hops(xs) if g.nv <= 6000 else ball_hops(g, xs, hop_radius(g, r0))
    h = 2.0 ** (-g.n)
    best = 1.0
    r = 3 * h
    while r < r0:
        big = (d * h <= r + HOP_EPS) @ g.mass
        small = (d * h <= r / 3 + HOP_EPS) @ g.mass
        best = max(best, float(np.max(big / small)))
        r *= 2
    return best


@dataclass
class ObstacleSetup:
    """Parameters of one enlargement-of-obstacles experiment.

    Args:
        M: eps = 2**-M.
        nu: intensity before rescaling (the cloud on G_0 has 3**M nu).
        a: profile range in units of eps (indicator profile of height A).
        b: enlargement radius in units of eps, a power of two larger than a.
        delta, K: comparison parameters.
        R: ball growth factor (> 3).
        r0: doubling scale (the diameter of G_0 by default).
        gamma: d_w for the diffusion, otherwise the stable index.
        n_base: resolution of G_M; G_0 is built at M + n_base.
    """
    M: int
    nu: float = 1.0
    a: float = 0.25
    b: float = 2.0
    delta: float = 0.05
    K: float = 10.0
    R: float = 4.0
    r0: float = 1.0
    A: float = 4.0
    gamma: float = D_W
    n_base: int = 2
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        kappa = log2(self.b)
        if abs(kappa - round(kappa)) > 1e-12 or self.b <= self.a:
            raise ValidationError("b must be a power of two larger than a")
        if self.R <= 3:
            raise ValidationError("R must exceed 3")
        if not self.K > self.delta > 0:
            raise ValidationError("need K > delta > 0")
        self.kappa = int(round(kappa))

    @property
    def eps(self):
        return 2.0 ** (-self.M)

    @property
    def diffusion(self):
        return abs(self.gamma - D_W) < 1e-12

    @property
    def phi(self):
        return PureDrift(1.0) if self.diffusion else StableWithDrift(0.0, self.gamma)

    @property
    def g(self):
        if "g" not in self._cache:
            self._cache["g"] = GasketGraph(0, self.M + self.n_base)
        return self._cache["g"]

    @property
    def profile(self):
        return Scaled(indicator(self.A, self.a), self.M, self.gamma)

    @property
    def C_d(self):
        if "Cd" not in self._cache:
            self._cache["Cd"] = doubling_constant(self.g, self.r0, rng=stream(0, "doubling", self.M))
        return self._cache["Cd"]

    def cloud(self, seed, r):
        return sample_cloud(self.g, self.nu * 3.0 ** self.M, stream(seed, "obstacles", r, self.M))


@dataclass
class Classification:
    good: np.ndarray            # per point
    points: np.ndarray          # vertex ids
    scales: list                # radii 10 b eps R**l that were checked
    union: np.ndarray           # vertex mask of all enlarged balls
    bad_volume: float
    trivial: bool               # no scale below r0: all good by definition


def classify(setup, cloud):
    """Good/bad split of the cloud points (exact on the graph)."""
    g = setup.g
    pts = cloud.vertices(g)
    be = setup.b * setup.eps
    hb = hop_radius(g, be)
    scales = []
    r = 10 * be
    while r < setup.r0:
        scales.append(r)
        r *= setup.R
    if len(pts) == 0:
        return Classification(np.zeros(0, bool), pts, scales, np.zeros(g.nv, bool), 0.0, not scales)
    upts = np.unique(pts)
    dball = ball_hops(g, upts, hb)
    union = np.any(dball <= hb, axis=0)
    good = np.ones(len(pts), dtype=bool)
    if scales:
        hmax = int(np.ceil(scales[-1] * 2.0 ** g.n)) + 1
        dC = ball_hops(g, upts, hmax)
        h = 2.0 ** (-g.n)
        upos = {v: k for k, v in enumerate(upts)}
        thr = setup.delta / setup.C_d
        ok_u = np.ones(len(upts), dtype=bool)
        for k in range(len(upts)):
            for rad in scales:
                C = dC[k] * h < rad - HOP_EPS          # open ball
                mC = g.mass[C].sum()
                if g.mass[C & union].sum() < thr * mC:
                    ok_u[k] = False
                    break
        good = ok_u[[upos[v] for v in pts]]
    bad = np.unique(pts[~good])
    bad_mask = np.any(ball_hops(g, bad, hb) <= hb, axis=0) if len(bad) else np.zeros(g.nv, bool)
    return Classification(good, pts, scales, union, float(g.mass[bad_mask].sum()), not scales)


@dataclass
class CoarseDomains:
    theta_b: np.ndarray        # vertex masks
    U_hat: np.ndarray
    U: np.ndarray


def _triangle_masks(g, cell_ij, side):
    """Vertex mask of the union of side-`side` (lattice units) triangles holding the cells."""
    mask = np.zeros(g.nv, dtype=bool)
    if len(cell_ij) == 0:
        return mask
    keys = np.unique(cell_ij // side, axis=0)
    I, J = g.ij[:, 0], g.ij[:, 1]
    for TI, TJ in keys:
        u, v = I - TI * side, J - TJ * side
        mask |= (u >= 0) & (v >= 0) & (u + v <= side)
    return mask


def coarse_domains(setup, cloud, cls):
    """Theta_b (minus good balls), U_hat (minus triangles with good points),
    U (minus triangles with any point); triangles have side b eps."""
    g = setup.g
    hb = hop_radius(g, setup.b * setup.eps)
    good_pts = np.unique(cls.points[cls.good])
    good_mask = np.any(ball_hops(g, good_pts, hb) <= hb, axis=0) if len(good_pts) else np.zeros(g.nv, bool)
    side = int(round(setup.b * setup.eps * 2.0 ** g.n))
    tri_good = _triangle_masks(g, cloud.cell_ij[cls.good], side)
    tri_all = _triangle_masks(g, cloud.cell_ij, side)
    return CoarseDomains(~good_mask, ~tri_good, ~tri_all)


# -- eigenvalues ---------------------------------------------------------------

def _operator(setup):
    """Reflected generator of the scale-0 process (sparse for diffusion, dense otherwise)."""
    if "op" not in setup._cache:
        g = setup.g
        if setup.diffusion:
            setup._cache["op"] = Generator(g, REFLECTED).sym()
        else:
            if g.nv > DENSE_CAP:
                raise CapacityError(f"jump branch needs a dense operator, dimension {g.nv}")
            setup._cache["op"] = SchrodingerProblem(g, setup.phi, mode=REFLECTED).base()
    return setup._cache["op"]


def lambda_restricted(setup, keep, V=None):
    """Principal eigenvalue of the scale-0 process killed off `keep`, plus V."""
    g = setup.g
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        return np.inf
    A = _operator(setup)
    Vk = np.zeros(len(idx)) if V is None else np.asarray(V)[idx]
    if setup.diffusion:
        B = (A[idx][:, idx] + sparse.diags(Vk)).tocsr()
        if len(idx) <= 400:
            return float(linalg.eigh(B.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
        return principal_sparse(B, g.mass[idx], 5.0 ** g.n)[0]
    B = A[np.ix_(idx, idx)] + np.diag(Vk)
    return float(linalg.eigh(B, eigvals_only=True, subset_by_index=[0, 0])[0])


def compare_eigenvalues(setup, cloud, cls=None):
    """(lam1(b) ^ K, lam1(V) ^ K, margin) with margin = lam1(V)^K + delta - lam1(b)^K."""
    cls = cls or classify(setup, cloud)
    dom = coarse_domains(setup, cloud, cls)
    lam_b = lambda_restricted(setup, dom.theta_b)
    V = setup.profile.matrix(setup.g, cloud.vertices(setup.g), None).sum(axis=0) if len(cloud) else None
    lam_V = lambda_restricted(setup, np.ones(setup.g.nv, bool), V)
    lb, lv = min(lam_b, setup.K), min(lam_V, setup.K)
    return lb, lv, lv + setup.delta - lb


def comparison_sweep(Ms, configs, seed, threads=1, **kw):
    """Run the comparison over eps = 2**-M for `configs` clouds each.

    Returns a list of per-configuration dicts (CSV rows), ordered by (eps, id).
    """
    from .ids import _map

    rows = []
    for M in Ms:
        st = ObstacleSetup(M, **kw)
        _operator(st)
        _ = st.C_d

        def one(r, st=st):
            cloud = st.cloud(seed, r)
            cls = classify(st, cloud)
            lb, lv, mg = compare_eigenvalues(st, cloud, cls)
            return dict(config_id=r, eps=st.eps, lambda_b=lb, lambda_V=lv, margin=mg,
                        n_good=int(cls.good.sum()), n_bad=int((~cls.good).sum()),
                        bad_volume=cls.bad_volume, bad_volume_ok=cls.bad_volume <= st.delta + 1e-12,
                        trivial=cls.trivial)
        rows.extend(_map(one, range(configs), threads))
    return rows


def domain_checks(setup, cloud, cls=None, dom=None):
    """Inclusions of the coarse domains and the eigenvalue order they imply."""
    g = setup.g
    cls = cls or classify(setup, cloud)
    dom = dom or coarse_domains(setup, cloud, cls)
    lt, lu = lambda_restricted(setup, dom.theta_b), lambda_restricted(setup, dom.U_hat)
    return dict(
        theta_in_Uhat=bool(np.all(dom.U_hat[dom.theta_b])),
        U_in_Uhat=bool(np.all(dom.U_hat[dom.U])),
        volume_gap=float(g.mass[dom.U_hat].sum() - g.mass[dom.U].sum()),
        volume_gap_ok=bool(g.mass[dom.U_hat].sum() - g.mass[dom.U].sum() <= setup.delta + 1e-12),
        bad_volume_ok=bool(cls.bad_volume <= setup.delta + 1e-12),
        lambda_theta=lt, lambda_Uhat=lu,
        # a relative slack for the iterative solver
        eig_order_ok=bool(lt >= lu * (1 - 1e-8) - 1e-10),
    )


def sweep_summary(rows, K):
    """Per eps: violating fraction, bad-volume pass rate and the fraction of
    configurations where both eigenvalues reach the cap K."""
    out = []
    for eps in sorted({r["eps"] for r in rows}, reverse=True):
        rr = [r for r in rows if r["eps"] == eps]
        mg = np.array([r["margin"] for r in rr])
        both = np.array([min(r["lambda_b"], r["lambda_V"]) for r in rr])
        out.append(dict(eps=eps, configs=len(rr), violating=float(np.mean(mg < 0)),
                        bad_volume_ok=float(np.mean([r["bad_volume_ok"] for r in rr])),
                        capped=float(np.mean(both >= K - 1e-12))))
    return out


def empirical_eps0(summary, level=0.95):
    """Largest eps below which every swept eps has margin >= 0 on `level` of configs."""
    eps0 = None
    for row in sorted(summary, key=lambda r: r["eps"]):
        if 1 - row["violating"] >= level:
            eps0 = row["eps"]
        else:
            break
    return eps0


# -- constants -------------------------------------------------------------------

def C_K_delta(K, delta, c0):
    return float(np.exp(K) * (1 + c0 * (1 + K / delta)))


def R_min(c3, kappa_hat, C):
    """Smallest R with c3 / (R**kappa - 1) <= 1 / (8 C)."""
    return float((8 * c3 * C + 1) ** (1 / kappa_hat))


def m0_value(c1, c2, C, diffusion=True):
    """Smallest integer m0 with (1 - c1 c2)**m0 (or **log2 m0) <= 1 / (8 C)."""
    q = 1 - c1 * c2
    if not 0 < q < 1:
        raise ValidationError("need 0 < c1 c2 < 1")
    need = log(8 * C) / -log(q)
    if not diffusion:
        need = 2.0 ** need if need < 60 else np.inf
    return int(ceil(need)) if np.isfinite(need) else np.inf


def D_value(b, R, m0):
    """D = 10 b R**m0 (in units of eps); inf on overflow."""
    with np.errstate(over="ignore"):
        return float(10 * b * np.power(float(R), m0))


# -- probes ------------------------------------------------------------------------
#
# All probes work in the symmetric gauge S = m^(1/2) H m^(-1/2), where H acts on
# functions; a function f maps to m^(1/2) f and back.  Semigroups are applied
# with expm_multiply, which also serves the sparse diffusion operator.

TAU0_RULES = ("travel", "recipe")


def tau0(setup, rule="travel"):
    """Horizon constant of (P3).

    "recipe" follows the three-threshold recipe with its unknown process
    constants set to one, which gives tau0 = 2 min(a**g / 2, (b + a/2)**g).
    "travel" keeps only the hitting branch, tau0 = 2 (b + a/2)**g, the time
    needed to cover the distance b + a/2.
    """
    a, b, g = setup.a, setup.b, setup.gamma
    if rule == "recipe":
        return 2 * min(a ** g / 2, (b + a / 2) ** g)
    if rule == "travel":
        return 2 * (b + a / 2) ** g
    raise ValidationError(f"unknown tau0 rule {rule!r}; expected one of {TAU0_RULES}")


def _sub(A, idx):
    return A[idx][:, idx] if sparse.issparse(A) else A[np.ix_(idx, idx)]


def _evolve(setup, keep, f, t, w=None, source=None):
    """u(t) on `keep` for u' = -(S + w) u + source (symmetric gauge, u(0) = f).

    Returns the function-gauge values on keep.  The source term is handled by
    augmenting the matrix with one extra coordinate held at 1.
    """
    idx = np.flatnonzero(keep)
    sm = np.sqrt(setup.g.mass[idx])
    S = _sub(_operator(setup), idx)
    if w is not None:
        S = S + (sparse.diags(w[idx]) if sparse.issparse(S) else np.diag(w[idx]))
    u0 = sm * f
    if source is None:
        return spla.expm_multiply(-t * S, u0) / sm
    col = (sm * source[idx])[:, None]
    if sparse.issparse(S):
        top = sparse.hstack([-S, sparse.csr_matrix(col)])
        Aug = sparse.vstack([top, sparse.csr_matrix((1, len(idx) + 1))]).tocsr()
    else:
        Aug = np.block([[-S, col], [np.zeros((1, len(idx) + 1))]])
    v = spla.expm_multiply(t * Aug, np.append(u0, 1.0))
    return v[:-1] / sm


def _fun_gauge(setup, idx):
    """Function-gauge generator restricted to idx (killing outside)."""
    sm = np.sqrt(setup.g.mass)
    A = _operator(setup)
    if sparse.issparse(A):
        D = sparse.diags(1 / sm)
        return (D @ A @ sparse.diags(sm)).tocsr()[idx][:, idx] if idx is not None else (D @ A @ sparse.diags(sm)).tocsr()
    Af = A * (sm[None, :] / sm[:, None])
    return Af if idx is None else Af[np.ix_(idx, idx)]


def _solve(A, b):
    return spla.spsolve(A.tocsc(), b) if sparse.issparse(A) else linalg.solve(A, b)


def probe_P1(setup, t=1.0, modes=120):
    """c0 = sup_{x, y} p(t, x, y) = sup_x p(t, x, x) of the reflected scale-0 process."""
    g = setup.g
    if g.nv <= DENSE_CAP:
        return float(np.max(np.diag(SchrodingerProblem(g, setup.phi, mode=REFLECTED).kernel(t))))
    if not setup.diffusion:
        raise CapacityError("P1 for jump processes needs a dense kernel")
    # only the low modes matter: check that the truncation is negligible
    S = _operator(setup)
    k = min(modes, g.nv - 2)
    w, U = spla.eigsh(S, k=k, sigma=-1e-3, which="LM")
    if np.exp(-t * w.max()) > 1e-12:
        raise SolverError("too few modes for the diagonal heat kernel; raise `modes`")
    diag = (U ** 2 * np.exp(-t * np.maximum(w, 0))).sum(axis=1) / g.mass
    return float(diag.max())


def _pairs(setup, rng, count, radius):
    """Sample (x, y) with d(x, y) <= radius."""
    g = setup.g
    h = hop_radius(g, radius)
    ys = rng.choice(g.nv, size=count, replace=True)
    uy = np.unique(ys)
    d = ball_hops(g, uy, h)
    pos = {v: k for k, v in enumerate(uy)}
    out = []
    for y in ys:
        cand = np.flatnonzero(d[pos[y]] <= h)
        out.append((int(rng.choice(cand)), int(y)))
    return out


def probe_P3(setup, samples=20, seed=0, rule="travel"):
    """2 c1 = 1 - sup E_x[exp(-int_0^{tau0 eps**gamma / 2} W_eps(X_s, y) ds)] over
    every x with d(x, y) <= b eps, for sampled y.

    The defect v = 1 - E solves v' = -(H + w) v + w, v(0) = 0, which keeps small
    values accurate.  Returns (c1, horizon).
    """
    g = setup.g
    rng = stream(seed, "probe-P3", setup.M)
    t = tau0(setup, rule) * setup.eps ** setup.gamma / 2
    hb = hop_radius(g, setup.b * setup.eps)
    keep = np.ones(g.nv, dtype=bool)
    worst = np.inf
    for y in rng.choice(g.nv, size=min(samples, g.nv), replace=False):
        w = setup.profile.matrix(g, [y], None)[0]
        v = _evolve(setup, keep, np.zeros(g.nv), t, w=w, source=w)
        d = ball_hops(g, [y], hb)[0]
        worst = min(worst, float(v[d <= hb].min()))
    return worst / 2, t


def probe_P2(setup, samples=20, seed=0, rule="travel"):
    """sup P_x[tau_{B(y, 10 (R-2) b eps)} < tau0 eps**gamma / 2] over d(x, y) <= b eps.

    Balls covering G_0 cannot be left, so they contribute 0.
    """
    g = setup.g
    rng = stream(seed, "probe-P2", setup.M)
    s = tau0(setup, rule) * setup.eps ** setup.gamma / 2
    hr = hop_radius(g, 10 * (setup.R - 2) * setup.b * setup.eps)
    worst = 0.0
    for x, y in _pairs(setup, rng, samples, setup.b * setup.eps):
        keep = ball_hops(g, [y], hr)[0] <= hr
        if keep.all():
            continue
        f = _evolve(setup, keep, np.ones(keep.sum()), s)
        worst = max(worst, 1 - float(f[np.searchsorted(np.flatnonzero(keep), x)]))
    return worst


def probe_P4(setup, r_values=(4, 8, 16), samples=10, seed=0, rule="travel"):
    """phi(r) = inf P_x[T_{B(y, b eps)} <= s] over pairs at distance <= r eps."""
    g = setup.g
    s = tau0(setup, rule) * setup.eps ** setup.gamma / 2
    hb = hop_radius(g, setup.b * setup.eps)
    out = {}
    for r in r_values:
        if r * setup.eps > setup.r0:
            continue
        rng = stream(seed, "probe-P4", setup.M, int(r))
        worst = 1.0
        for x, y in _pairs(setup, rng, samples, r * setup.eps):
            target = ball_hops(g, [y], hb)[0] <= hb
            if target[x]:
                continue
            f = _evolve(setup, ~target, np.ones((~target).sum()), s)
            p = 1 - float(f[np.searchsorted(np.flatnonzero(~target), x)])
            worst = min(worst, max(p, 0.0))
        out[r] = worst
    return out


def _hit_before_exit(setup, E, D):
    """P_x[T_E < tau_D] for all x (masks E inside D)."""
    g = setup.g
    free = np.flatnonzero(D & ~E)
    e_idx = np.flatnonzero(E)
    u = np.zeros(g.nv)
    u[e_idx] = 1.0
    if len(free):
        Af = _fun_gauge(setup, None)
        rhs = -np.asarray(Af[free][:, e_idx].sum(axis=1) if sparse.issparse(Af)
                          else Af[np.ix_(free, e_idx)].sum(axis=1)).ravel()
        u[free] = _solve(_sub(Af, free), rhs)
    return np.clip(u, 0, 1)


def probe_P5(setup, samples=10, seed=0):
    """c2 = inf P_x[T_E < tau_{B(y, R beta)}] with E a ball holding exactly the
    required fraction delta / C_d of B(y, beta), placed far from x.

    beta = 10 b eps when that is admissible (<= r0 / R), otherwise r0 / R and
    the report flags it.  Returns (c2, beta, admissible).
    """
    g = setup.g
    rng = stream(seed, "probe-P5", setup.M)
    beta = 10 * setup.b * setup.eps
    admissible = beta <= setup.r0 / setup.R
    beta = min(beta, setup.r0 / setup.R)
    hbeta, hR = hop_radius(g, beta), hop_radius(g, setup.R * beta)
    need_frac = setup.delta / setup.C_d
    worst = 1.0
    for x, y in _pairs(setup, rng, samples, beta):
        dy = ball_hops(g, [y], hR)[0]
        ball = dy <= hbeta
        D = dy <= hR
        dx = ball_hops(g, [x], 4 * hR)[0]
        far = np.flatnonzero(ball)[np.argmax(np.where(np.isfinite(dx[ball]), dx[ball], -1))]
        dz = ball_hops(g, [far], 2 * hbeta)[0]
        need = need_frac * g.mass[ball].sum()
        for h in range(0, 2 * hbeta + 1):
            E = (dz <= h) & ball
            if g.mass[E].sum() >= need:
                break
        worst = min(worst, float(_hit_before_exit(setup, E, D)[x]))
    return worst, beta, admissible


def probe_P6(setup, radii=None, ratios=(4, 8, 16), samples=5, seed=0):
    """Exit overshoot P_x[X_{tau_{B(y, r)}} outside B(y, A)] for d(x, y) <= r.

    The exit law is G 1_out-rate with G the Green function of the killed
    process.  Returns (list of (r, A, sup probability), fitted (c3, kappa));
    kappa is nan when every probability vanishes (nearest-neighbour diffusion).
    """
    g = setup.g
    h = 2.0 ** (-g.n)
    Af = _fun_gauge(setup, None)
    rng = stream(seed, "probe-P6", setup.M)
    radii = radii or [h * 2 ** k for k in range(1, 4) if h * 2 ** k < setup.r0 / 3]
    agg = {}
    for r in radii:
        hr = hop_radius(g, r)
        for x, y in _pairs(setup, rng, samples, r):
            dy = ball_hops(g, [y], g.nv)[0]
            inside = np.flatnonzero(dy <= hr)
            A_in = _sub(Af, inside)
            xi = np.searchsorted(inside, x)
            for q in ratios:
                Aq = q * r
                outside = np.flatnonzero(dy * h >= Aq - HOP_EPS)
                if len(outside) == 0:
                    continue
                jump = Af[inside][:, outside] if sparse.issparse(Af) else Af[np.ix_(inside, outside)]
                jump = -np.asarray(jump.sum(axis=1)).ravel()
                p = 0.0 if not np.any(jump) else max(0.0, float(_solve(A_in, jump)[xi]))
                agg[(r, Aq)] = max(agg.get((r, Aq), 0.0), p)
    table = [(r, Aq, p) for (r, Aq), p in sorted(agg.items())]
    pos = [(r / Aq, p) for r, Aq, p in table if p > 1e-14]
    if len(pos) >= 2 and len({u for u, _ in pos}) >= 2:
        xs = np.log([u for u, _ in pos])
        ys = np.log([p for _, p in pos])
        k = np.polyfit(xs, ys, 1)[0]
        # c3 so that every point lies below c3 (r/A)**kappa
        c3 = float(np.max(np.exp(ys - k * xs)))
        return table, (c3, float(k))
    return table, (0.0, np.nan)


def probe_report(setup, samples=10, seed=0, rule="travel"):
    """(P1)-(P6) and the derived constants for one setup (a flat dict)."""
    c0 = probe_P1(setup)
    c1, horizon = probe_P3(setup, samples, seed, rule)
    p2 = probe_P2(setup, samples, seed, rule)
    p4 = probe_P4(setup, samples=samples, seed=seed, rule=rule)
    c2, beta, adm = probe_P5(setup, samples, seed)
    if setup.diffusion:
        table, (c3, kap) = [], (0.0, np.nan)      # continuous paths do not overshoot
    else:
        table, (c3, kap) = probe_P6(setup, samples=max(2, samples // 2), seed=seed)
    C = C_K_delta(setup.K, setup.delta, c0)
    rep = dict(eps=setup.eps, gamma=setup.gamma, nv=setup.g.nv, C_d=setup.C_d, c0=c0,
               tau0=tau0(setup, rule), tau0_rule=rule, horizon=horizon, c1=c1, P2=p2,
               P2_ok=bool(p2 < c1), c2=c2, P5_beta=beta, P5_admissible=adm,
               c3=c3, kappa=kap, C_K_delta=C)
    for r, v in p4.items():
        rep[f"P4_phi_{r}"] = v
    for r, Aq, p in table:
        rep[f"P6_r{r:.4g}_A{Aq:.4g}"] = p
    rep["R_min"] = R_min(c3, kap, C) if (not setup.diffusion and kap > 0) else np.nan
    rep["m0"] = np.nan
    rep["D"] = np.nan
    if c1 > 0 and 0 < c1 * c2 < 1:
        m0 = m0_value(c1, c2, C, setup.diffusion)
        rep["m0"] = m0
        rep["D"] = D_value(setup.b, setup.R, float(m0))
    return rep


def probe_sweep(Ms, gamma=D_W, n_base=None, samples=10, seed=0, rule="travel", **kw):
    """probe_report over eps = 2**-M; n_base defaults to 1 (diffusion) or 0 (jumps)."""
    if n_base is None:
        n_base = 1 if abs(gamma - D_W) < 1e-12 else 0
    return [probe_report(ObstacleSetup(M, gamma=gamma, n_base=n_base, **kw), samples, seed, rule)
            for M in Ms]


def eps_stability(values):
    """max / min of positive values (inf if any is not positive)."""
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min()) if np.all(v > 0) else np.inf


__all__ = [
    "ObstacleSetup", "Classification", "CoarseDomains", "classify", "coarse_domains",
    "compare_eigenvalues", "lambda_restricted", "domain_checks", "sweep_summary", "empirical_eps0", "comparison_sweep", "doubling_constant",
    "C_K_delta", "R_min", "m0_value", "D_value", "tau0", "TAU0_RULES", "probe_P1",
    "probe_P2", "probe_P3", "probe_P4", "probe_P5", "probe_P6", "probe_report", "probe_sweep",
    "eps_stability",
]
