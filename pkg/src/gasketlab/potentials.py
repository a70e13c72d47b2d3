"""Interaction profiles, Poisson clouds and the potentials they generate.

Cloud points are drawn cell by cell: the number of points is Poisson with
mean nu * m(G_M), each point picks a cell uniformly and then one of the
cell's three corners uniformly.  The corner is where the point sits on the
graph (the barycenter is equidistant from all three, so this is the nearest
vertex with a random tie-break).  Since every cell gives a third of its mass
to each corner, the resulting vertex law is proportional to the vertex
masses, which makes the exponential formula with vertex masses exact.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ValidationError
from .gasket import D_F, GasketGraph, cell_word, project_lattice, unfold_lattice

CORNER_OFFSETS = np.array([(0, 0), (1, 0), (0, 1)], dtype=np.int64)


# -- profiles -----------------------------------------------------------------

class Profile:
    """W(x, y) >= 0 evaluated on vertex pairs of a gasket graph.

    Subclasses implement `block(g, rows, cols)`.  `theta` is the decay
    exponent used to pick the split radius a = t**(1/(d + theta)); for
    finite-range profiles any theta > 0 is admissible.
    """
    theta = 1.0
    core = 0.0          # W >= A on B(0, core), the A given by `floor`
    floor = 0.0
    range = np.inf

    def block(self, g, rows, cols):
        raise NotImplementedError

    def matrix(self, g, rows=None, cols=None):
        rows = np.arange(g.nv) if rows is None else np.asarray(rows)
        cols = np.arange(g.nv) if cols is None else np.asarray(cols)
        W = self.block(g, rows, cols)
        if np.any(W < 0):
            raise ValidationError("profile produced negative values")
        return W

    def radial(self, r):
        """W as a function of distance, for distance profiles only."""
        raise ValidationError(f"{type(self).__name__} is not a distance profile")


class DistanceProfile(Profile):
    """W(x, y) = f(d(x, y)).

    Args:
        f: vectorised function of distance.
        range: support radius (inf for long range).
        theta: decay exponent (W <= K d**(-d - theta) beyond distance 1).
        core, floor: W >= floor on B(0, core).
        name: label used in reports.
    """

    def __init__(self, f, range=np.inf, theta=1.0, core=0.0, floor=0.0, name="distance"):
        self.f, self.range, self.theta = f, float(range), float(theta)
        self.core, self.floor, self.name = float(core), float(floor), name

    def radial(self, r):
        return np.asarray(self.f(np.asarray(r, dtype=float)), dtype=float)

    def block(self, g, rows, cols):
        return self.radial(g.dist(rows)[:, cols])

    def __repr__(self):
        return self.name


def indicator(A=4.0, a0=0.25, theta=1.0):
    """W = A on the closed ball of radius a0."""
    if A <= 0 or a0 <= 0:
        raise ValidationError("indicator profile needs A > 0 and a0 > 0")
    f = lambda r: np.where(r <= a0 + 1e-12, A, 0.0)  # noqa: E731
    return DistanceProfile(f, range=a0, theta=theta, core=a0, floor=A,
                           name=f"indicator(A={A:g},a0={a0:g})")


def polynomial(K=1.0, theta=1.0, core=1.0):
    """W = K min(1, (r/core)**(-d - theta)): bounded core with power-law tail."""
    if K <= 0 or theta <= 0 or core <= 0:
        raise ValidationError("polynomial profile needs positive K, theta, core")
    f = lambda r: K * np.maximum(r / core, 1.0) ** (-(D_F + theta))  # noqa: E731
    return DistanceProfile(f, theta=theta, core=core, floor=K,
                           name=f"polynomial(K={K:g},theta={theta:g},core={core:g})")


class Scaled(Profile):
    """W_M(x, y) = 2**(M gamma) W(2**M x, 2**M y) for a distance profile."""

    def __init__(self, base, M, gamma):
        self.base, self.M, self.gamma = base, M, float(gamma)
        self.theta = base.theta
        self.range = base.range / 2.0 ** M
        self.core = base.core / 2.0 ** M
        self.floor = base.floor * 2.0 ** (M * gamma)

    def radial(self, r):
        return 2.0 ** (self.M * self.gamma) * self.base.radial(2.0 ** self.M * np.asarray(r))

    def block(self, g, rows, cols):
        if isinstance(self.base, DistanceProfile):
            return self.radial(g.dist(rows)[:, cols])
        # lattice profiles: evaluate on the graph of G_{M + level} sharing the lattice
        big = GasketGraph(g.M + self.M, g.n - self.M)
        return 2.0 ** (self.M * self.gamma) * self.base.block(big, rows, cols)


class Split(Profile):
    """W restricted to d <= a (part="short") or d > a (part="long")."""

    def __init__(self, base, a, part):
        if part not in ("short", "long"):
            raise ValidationError("part must be 'short' or 'long'")
        self.base, self.a, self.part = base, float(a), part
        self.theta = base.theta

    def block(self, g, rows, cols):
        W = self.base.block(g, rows, cols)
        near = g.dist(rows)[:, cols] <= self.a + 1e-12
        return np.where(near, W, 0.0) if self.part == "short" else np.where(near, 0.0, W)


def split_profile(profile, a):
    """(W_a, W^a) with W = W_a + W^a."""
    return Split(profile, a, "short"), Split(profile, a, "long")


def _tri_key(I, J):
    return np.where((I >= 0) & (J >= 0) & ((I & J) == 0), I * (1 << 31) + J, -1)


def triangles_containing(ij, m, n):
    """Keys of the size-2**m triangles containing each lattice point (-1 = none).

    Returns an (npts, 3) array: the floor triangle and the two neighbours that
    share a V_m vertex with it.
    """
    ij = np.asarray(ij, dtype=np.int64)
    s = 1 << (m + n)
    I, J = ij[:, 0] // s, ij[:, 1] // s
    u, v = ij[:, 0] - I * s, ij[:, 1] - J * s
    at_vertex = (u == 0) & (v == 0)
    k0 = _tri_key(I, J)
    k1 = np.where(at_vertex, _tri_key(I - 1, J), -1)
    k2 = np.where(at_vertex, _tri_key(I, J - 1), -1)
    return np.stack([k0, k1, k2], axis=1)


def triangles_at_vertex(ij, m, n):
    """Keys of the size-2**m triangles having the V_m point ij as a corner."""
    return triangles_containing(ij, m, n)


def _share(kx, ky):
    """Boolean matrix: rows/cols share a triangle key (ignoring -1)."""
    out = np.zeros((len(kx), len(ky)), dtype=bool)
    for a in range(kx.shape[1]):
        for b in range(ky.shape[1]):
            out |= (kx[:, a, None] == ky[None, :, b]) & (kx[:, a, None] >= 0)
    return out


class CellProfile(Profile):
    """W(x, y) = psi(pi_{M0}(y)) if x, y lie in a common size-2**M0 triangle.

    Args:
        psi: function of planar coordinates (array (k, 2)) on G_{M0}.
        M0: triangle scale, 0 <= M0.
        A: lower bound of psi (used for the (W4) check).
    """

    def __init__(self, psi, M0=0, A=1.0, theta=1.0):
        if M0 < 0:
            raise ValidationError("cell profiles need M0 >= 0")
        self.psi, self.M0, self.floor, self.theta = psi, int(M0), float(A), float(theta)
        self.range = 2.0 ** (M0 + 1)

    def block(self, g, rows, cols):
        if self.M0 > g.M:
            raise ValidationError("cell scale exceeds the graph")
        tri = triangles_containing(g.ij, self.M0, g.n)
        same = _share(tri[rows], tri[cols])
        pij = project_lattice(g.ij[cols], self.M0, g.n)
        h = 2.0 ** (-g.n)
        xy = np.stack([(pij[:, 0] + 0.5 * pij[:, 1]) * h, 0.5 * np.sqrt(3) * pij[:, 1] * h], axis=1)
        vals = np.asarray(self.psi(xy), dtype=float)
        return np.where(same, vals[None, :], 0.0)


def _valuation(ij, n):
    """Largest k with both coordinates divisible by 2**(n+k); origin -> large."""
    g = np.gcd(ij[:, 0], ij[:, 1])
    out = np.full(len(ij), 10**6, dtype=np.int64)
    nz = g > 0
    v = np.zeros(nz.sum(), dtype=np.int64)
    gg = g[nz]
    while np.any(gg % 2 == 0):
        ev = gg % 2 == 0
        v[ev] += 1
        gg = np.where(ev, gg // 2, gg)
    out[nz] = v - n
    return out


class DyadicDecay(Profile):
    """W = a_k on D_k(x) minus D_{k-1}(x), the dyadic neighbourhoods of x.

    D_k(x) is built from the V_0 vertex p_x of largest level within distance
    one of x: the two size-2**k triangles at p_x while k <= level(p_x), and
    the size-2**k triangle(s) containing x otherwise.

    Args:
        a: sequence a_0, a_1, ... or a callable k -> a_k.
        theta: decay exponent (a_k = 2**(-k(d + theta)) gives theta).
    """

    def __init__(self, a=None, theta=1.0, A=1.0):
        self.theta = float(theta)
        if a is None:
            a = lambda k: A * 2.0 ** (-k * (D_F + theta))  # noqa: E731
        self.a = a if callable(a) else (lambda k, seq=tuple(a): seq[min(k, len(seq) - 1)])
        self.floor = float(self.a(0))

    def levels(self, g, rows, cols):
        """Smallest k with y in D_k(x) (g.M + 1 if none)."""
        if g.n < 0:
            raise ValidationError("dyadic profile needs n >= 0")
        v0 = np.flatnonzero(g.in_scale(0))
        d = g.hops(v0)[:, rows] * 2.0 ** (-g.n)           # (n_v0, rows)
        lev = _valuation(g.ij[v0], g.n)
        cand = np.where(d <= 1 + 1e-12, lev[:, None], -1)
        px = v0[np.argmax(cand, axis=0)]
        rx = lev[np.argmax(cand, axis=0)]
        out = np.full((len(rows), len(cols)), g.M + 1, dtype=np.int64)
        for k in range(g.M, -1, -1):
            near = rx >= k
            kx = np.where(near[:, None],
                          triangles_at_vertex(g.ij[px], k, g.n),
                          triangles_containing(g.ij[rows], k, g.n))
            # the origin always uses the triangle containing x
            origin = (g.ij[px] == 0).all(axis=1)
            kx[origin] = triangles_containing(g.ij[rows][origin], k, g.n)
            ky = triangles_containing(g.ij[cols], k, g.n)
            out[_share(kx, ky)] = k
        return out

    def block(self, g, rows, cols):
        lv = self.levels(g, rows, cols)
        table = np.array([self.a(k) for k in range(g.M + 2)])
        table[-1] = 0.0
        return table[lv]


# -- clouds ---------------------------------------------------------------

@dataclass
class PoissonConfiguration:
    """Poisson points on G_M at resolution n.

    cell_ij: lower-left lattice corners of the chosen cells.
    corner: which corner (0, 1, 2) the point sits on.
    """
    M: int
    n: int
    cell_ij: np.ndarray
    corner: np.ndarray
    nu: float

    def __len__(self):
        return len(self.corner)

    @property
    def ij(self):
        return self.cell_ij + CORNER_OFFSETS[self.corner]

    def vertices(self, g):
        if g.n != self.n:
            raise ValidationError("cloud and graph resolution differ")
        return g.index(self.ij)

    def words(self):
        """IFS address of the cell followed by the corner digit."""
        return [cell_word(c, self.M + self.n) + str(k + 1) for c, k in zip(self.cell_ij, self.corner)]

    def restrict(self, M):
        """Points lying in G_M (cells inside the side-2**M triangle)."""
        L = 1 << (M + self.n)
        keep = (self.cell_ij.sum(axis=1) < L)
        return PoissonConfiguration(M, self.n, self.cell_ij[keep], self.corner[keep], self.nu)

    def scaled(self, M):
        """The same points viewed in G_0 at resolution n + M (intensity 3**M nu)."""
        return PoissonConfiguration(0, self.n + self.M, self.cell_ij, self.corner, self.nu * 3.0 ** self.M)


def sample_cloud(g, nu, rng):
    """Poisson cloud of intensity nu * m on the graph's gasket."""
    if nu < 0:
        raise ValidationError("intensity must be non-negative")
    N = rng.poisson(nu * 3.0 ** g.M)
    cells = g.cell_ij[rng.integers(0, len(g.cell_ij), N)]
    corner = rng.integers(0, 3, N)
    return PoissonConfiguration(g.M, g.n, cells, corner, nu)


class PotentialBuilder:
    """Caches W on a graph and turns clouds into potentials."""

    def __init__(self, g, profile):
        self.g, self.profile = g, profile
        self._W = None

    @property
    def W(self):
        if self._W is None:
            self._W = self.profile.matrix(self.g)
        return self._W

    def __call__(self, config):
        if len(config) == 0:
            return np.zeros(self.g.nv)
        v = config.vertices(self.g)
        return self.W[:, v].sum(axis=1)


def potential(g, profile, config):
    """V(x) = sum_i W(x, x_i)."""
    return PotentialBuilder(g, profile)(config)


def periodize(gM, profile, config, K, tail_tol=1e-3, gK=None):
    """Periodized potential on G_M: every point is replaced by its copies in
    all size-2**M triangles of G_K.

    Args:
        gM: graph of G_M.
        profile: interaction profile.
        config: cloud on G_M.
        K: truncation level (copies are summed over G_K).
        tail_tol: warn when the estimated missing tail exceeds this fraction.
    Returns:
        (V_star on gM vertices, tail estimate)
    """
    if K < gM.M:
        raise ValidationError("truncation level below M")
    gK = gK or GasketGraph(K, gM.n)
    rows = gK.index(gM.ij)
    if len(config) == 0:
        return np.zeros(gM.nv), 0.0
    copies = unfold_lattice(config.ij, gM.M, K, gM.n).reshape(-1, 2)
    cid = gK.index(copies)
    uniq, cnt = np.unique(cid, return_counts=True)
    W = profile.matrix(gK, rows, uniq)
    V = W @ cnt
    tail = truncation_tail(profile, gM.M, K) * len(config)
    if V.max() > 0 and tail > tail_tol * V.max():
        warnings.warn(f"periodization truncated at G_{K}: estimated tail {tail:.3g}", RuntimeWarning)
    return V, tail


def truncation_tail(profile, M, K):
    """Rough size of one point's copies beyond G_K seen from G_M.

    Copies outside G_K are at least 2**K - 2**M away and have density 3**-M per
    unit mass; the ball volume is approximated by r**d.
    """
    R = 2.0 ** K - 2.0 ** M
    if R >= profile.range:
        return 0.0
    try:
        f = lambda r: float(profile.radial(r)) * D_F * r ** (D_F - 1)  # noqa: E731
        val, _ = integrate.quad(f, R, np.inf, limit=200)
    except ValidationError:
        return np.inf
    return 3.0 ** (-M) * val


def rescaled_periodize(M, n, profile, gamma, config0, K):
    """V*_{0,M,gamma}: periodized potential of the rescaled profile on G_0.

    Args:
        M: scale.
        n: resolution of the G_M picture; G_0 is built at resolution n + M.
        profile: unscaled distance profile.
        gamma: scaling index.
        config0: cloud on G_0 at resolution n + M (intensity 3**M nu).
        K: copies are summed over G_K (in G_0 units).
    """
    g0 = GasketGraph(0, n + M)
    V, _ = periodize(g0, Scaled(profile, M, gamma), config0, K, tail_tol=np.inf)
    return V


def s_w(g, profile, a):
    """sup_x sum_y m(y) W(x, y) 1{d(x, y) > a}."""
    W = profile.matrix(g)
    far = g.dist() > a + 1e-12
    return float(np.max((W * far) @ g.mass))


def r_w(g, profile, a, t):
    """inf_x sum_y m(y) (1 - exp(-t W(x, y))) 1{d(x, y) > a}."""
    W = profile.matrix(g)
    far = g.dist() > a + 1e-12
    return float(np.min((-np.expm1(-t * W) * far) @ g.mass))


def annealed_fk_weight(g, profile, nu, ell, W=None):
    """E_Q exp(-sum_x ell(x) V(x)) = exp(-nu sum_y m(y)(1 - exp(-sum_x ell(x) W(x, y))))."""
    ell = np.asarray(ell, dtype=float)
    if W is None:
        W = profile.matrix(g)
    return float(np.exp(-nu * np.dot(g.mass, -np.expm1(-(ell @ W)))))


def check_w4(profile, g):
    """(W4): W(x, y) >= floor whenever d(x, y) <= core.  Returns the worst ratio."""
    if profile.core <= 0:
        return np.inf
    W = profile.matrix(g)
    near = g.dist() <= profile.core + 1e-12
    return float(W[near].min() / profile.floor)


def fiber_monotonicity(g_big, profile, M, samples, rng):
    """(W3) check on random pairs: sum over the pi_M fiber of pi_M(y) seen from
    pi_M(x) is at most the same sum seen from pi_{M+1}(x).

    Fibers are truncated to g_big.  Returns the fraction of pairs satisfying it.
    """
    n = g_big.n
    ok = 0
    ids = rng.integers(0, g_big.nv, size=(samples, 2))
    for x, y in ids:
        xy = g_big.ij[[x, y]]
        pmx = project_lattice(xy[:1], M, n)
        pm1x = project_lattice(xy[:1], M + 1, n)
        fib = unfold_lattice(project_lattice(xy[1:], M, n), M, g_big.M, n).reshape(-1, 2)
        cols = g_big.index(fib)
        lhs = profile.matrix(g_big, g_big.index(pmx), cols).sum()
        rhs = profile.matrix(g_big, g_big.index(pm1x), cols).sum()
        ok += lhs <= rhs * (1 + 1e-12) + 1e-300
    return ok / samples


PROFILE_PRESETS = {
    "indicator": lambda A=4.0, a0=0.25, theta=1.0: indicator(A, a0, theta),
    "polynomial": lambda K=1.0, theta=1.0, core=1.0: polynomial(K, theta, core),
    "dyadic": lambda A=1.0, theta=1.0: DyadicDecay(theta=theta, A=A),
    "cell": lambda A=1.0, M0=0: CellProfile(lambda xy, A=A: np.full(len(xy), A), int(M0), A),
}


def parse_profile(spec):
    """Build a profile from 'name:key=value,...', e.g. 'indicator:A=4,a0=0.25'."""
    from .subordinators import parse_value

    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in PROFILE_PRESETS:
        raise ValidationError(f"unknown profile {name!r}; expected one of {sorted(PROFILE_PRESETS)}")
    kw = {}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise ValidationError(f"malformed parameter {item!r}")
        kw[k.strip()] = parse_value(v)
    try:
        return PROFILE_PRESETS[name](**kw)
    except TypeError as err:
        raise ValidationError(f"bad parameters for {name}: {err}") from None


__all__ = [
    "PROFILE_PRESETS", "parse_profile", "Profile", "DistanceProfile", "indicator", "polynomial", "Scaled", "Split",
    "split_profile", "CellProfile", "DyadicDecay", "PoissonConfiguration",
    "sample_cloud", "PotentialBuilder", "potential", "periodize",
    "rescaled_periodize", "s_w", "r_w", "annealed_fk_weight", "check_w4",
    "fiber_monotonicity", "truncation_tail",
]
