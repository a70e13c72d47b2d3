"""Finite graph approximations of the one-sided Sierpinski gasket.

A gasket of side 2**M at resolution n is stored on the integer lattice
spanned by e1 = (1, 0) and e2 = (1/2, sqrt(3)/2), in units of 2**-n.  Unit
upward cells sit at lattice points (i, j) with i & j == 0 (Pascal's triangle
mod 2), which gives the 3**(M+n) cells of G_M directly.

Each cell carries mass 3**-n, split equally between its three corners, so the
total mass of G_M is 3**M and vertex masses are exact rationals.
"""
from fractions import Fraction
from math import log

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path

from .errors import CapacityError, ValidationError

D_F = log(3) / log(2)        # Hausdorff dimension
D_W = log(5) / log(2)        # walk dimension
D_S = 2 * D_F / D_W          # spectral dimension

MAX_LEVEL = 13               # M + n budget, 3**13 cells
DENSE_METRIC_LIMIT = 6000    # cache the full hop matrix below this size
LABELS = "abc"

SQ3 = np.sqrt(3.0)


def cell_origins(level):
    """Lower-left lattice points of the 3**level unit cells of a side-2**level gasket."""
    cells = np.zeros((1, 2), dtype=np.int64)
    for k in range(level):
        h = 1 << k
        cells = np.concatenate([cells, cells + (h, 0), cells + (0, h)])
    return cells


def cell_word(ij, level):
    """Address in {1,2,3}**level of the cell with lower-left corner ij."""
    i, j = int(ij[0]), int(ij[1])
    out = []
    for k in range(level - 1, -1, -1):
        h = 1 << k
        if i >= h:
            out.append("2")
            i -= h
        elif j >= h:
            out.append("3")
            j -= h
        else:
            out.append("1")
    return "".join(out)


def lattice_label(ij, n):
    """Label index (0, 1, 2 for a, b, c) of lattice points lying in V_0."""
    ij = np.asarray(ij, dtype=np.int64)
    u = 1 << n
    if np.any(ij % u):
        raise ValidationError("labels are defined only on V_0")
    return ((ij[..., 0] - ij[..., 1]) // u) % 3


class GasketGraph:
    """Level-n graph of G_M = 2**M G_0.

    Attributes:
        M, n: size exponent and resolution.
        ij: (nv, 2) int lattice coordinates in units of 2**-n.
        edges: (ne, 2) vertex ids, id1 < id2.
        cells: (nc, 3) vertex ids of each cell's corners (lower-left, right, top).
        corners: ids of the three outer corners (origin, 2**M e1, 2**M e2).
        mass: float vertex masses.
        deg: vertex degrees.
    """

    def __init__(self, M, n):
        M, n = int(M), int(n)
        if M < 0 or n < 0:
            raise ValidationError(f"need M >= 0 and n >= 0, got M={M}, n={n}")
        if M + n > MAX_LEVEL:
            raise CapacityError(f"3**{M + n} cells exceeds the budget 3**{MAX_LEVEL}")
        self.M, self.n = M, n
        self.level = M + n
        self.L = 1 << self.level
        origins = cell_origins(self.level)
        corner_pts = np.stack([origins, origins + (1, 0), origins + (0, 1)], axis=1)
        keys = self._key(corner_pts.reshape(-1, 2))
        ukeys, inv = np.unique(keys, return_inverse=True)
        self._keys = ukeys
        self.ij = np.stack([ukeys % (self.L + 1), ukeys // (self.L + 1)], axis=1)
        self.cells = inv.reshape(-1, 3)
        self.cell_ij = origins
        e = np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [0, 2]]])
        e.sort(axis=1)
        self.edges = e[np.lexsort((e[:, 1], e[:, 0]))]
        nv = len(ukeys)
        self.nv = nv
        self.deg = np.bincount(self.edges.ravel(), minlength=nv)
        self.cell_mass = 3.0 ** (-n)
        self.mass = self.deg * self.cell_mass / 6.0
        self.corners = self.index([(0, 0), (self.L, 0), (0, self.L)])
        self._hops = None
        self._adj = None

    def _key(self, ij):
        ij = np.asarray(ij, dtype=np.int64)
        return ij[..., 1] * (self.L + 1) + ij[..., 0]

    def __repr__(self):
        return f"GasketGraph(M={self.M}, n={self.n}, nv={self.nv})"

    # -- lookup -----------------------------------------------------------
    def index(self, ij):
        """Vertex ids of lattice points; raises if a point is not a vertex."""
        ij = np.asarray(ij, dtype=np.int64)
        k = self._key(ij)
        pos = np.searchsorted(self._keys, k)
        pos = np.minimum(pos, len(self._keys) - 1)
        if np.any(self._keys[pos] != k):
            raise ValidationError("lattice point is not a vertex of this graph")
        return pos

    def contains(self, ij):
        ij = np.asarray(ij, dtype=np.int64)
        ok = (ij[..., 0] >= 0) & (ij[..., 1] >= 0) & (ij[..., 0] + ij[..., 1] <= self.L)
        k = self._key(np.where(ok[..., None], ij, 0))
        pos = np.minimum(np.searchsorted(self._keys, k), len(self._keys) - 1)
        return ok & (self._keys[pos] == k)

    @property
    def xy(self):
        """Planar coordinates of the vertices."""
        h = 2.0 ** (-self.n)
        i, j = self.ij[:, 0], self.ij[:, 1]
        return np.stack([(i + 0.5 * j) * h, 0.5 * SQ3 * j * h], axis=1)

    def mass_exact(self, v):
        return Fraction(int(self.deg[v]), 6 * 3 ** self.n)

    def total_mass(self):
        return sum((self.mass_exact(v) for v in range(self.nv)), Fraction(0))

    @property
    def interior(self):
        """Boolean mask of non-corner vertices."""
        m = np.ones(self.nv, dtype=bool)
        m[self.corners] = False
        return m

    def in_scale(self, k):
        """Mask of vertices belonging to V_k (lattice points of spacing 2**k)."""
        s = 2.0 ** (k + self.n)
        if s < 1:
            return np.ones(self.nv, dtype=bool)
        s = int(s)
        return (self.ij[:, 0] % s == 0) & (self.ij[:, 1] % s == 0)

    def labels(self, k):
        """(ids, label index) of V_k vertices for 0 <= k <= M."""
        if not 0 <= k <= self.M:
            raise ValidationError(f"label scale {k} outside [0, {self.M}]")
        ids = np.flatnonzero(self.in_scale(k))
        return ids, lattice_label(self.ij[ids], self.n)

    # -- graph structure --------------------------------------------------
    @property
    def adjacency(self):
        if self._adj is None:
            r = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            c = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            self._adj = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(self.nv, self.nv))
        return self._adj

    def hops(self, sources=None):
        """Hop distances from the given vertex ids (all vertices if None)."""
        if sources is None and self.nv <= DENSE_METRIC_LIMIT:
            if self._hops is None:
                d = shortest_path(self.adjacency, method="D", unweighted=True)
                self._hops = d.astype(np.int32)
            return self._hops
        if self._hops is not None:
            return self._hops[sources]
        d = shortest_path(self.adjacency, method="D", unweighted=True, indices=sources)
        return d.astype(np.int32)

    def dist(self, sources=None):
        """Geodesic distances (hops times 2**-n) from the given vertices."""
        return self.hops(sources) * 2.0 ** (-self.n)

    def ball_measure(self, x, r):
        """m(B(x, r)) for vertex x, closed ball, as a sum of vertex masses."""
        d = self.dist([x])[0]
        return float(self.mass[d <= r + 1e-12].sum())

    # -- projections and unfolding ----------------------------------------
    def project(self, m):
        """Vertex ids of pi_m(v) for every vertex v (0 <= m <= M)."""
        return self.index(project_lattice(self.ij, m, self.n))

    def dump(self, fh, scales=True):
        """Write the plain-text graph dump."""
        xy = self.xy
        for v in range(self.nv):
            q = self.mass_exact(v)
            fh.write(f"v {v} {xy[v, 0]:.17g} {xy[v, 1]:.17g} {q.numerator}/{q.denominator}\n")
        for a, b in self.edges:
            fh.write(f"e {a} {b}\n")
        for c in self.corners:
            fh.write(f"b {c}\n")
        if scales:
            for k in range(self.M + 1):
                ids, lab = self.labels(k)
                for v, l in zip(ids, lab):
                    fh.write(f"l {v} {k} {LABELS[l]}\n")


def _corner_table(m, n):
    """Lattice positions of the corners of G_m, indexed by label index."""
    s = 1 << (m + n)
    q = (1 << m) % 3
    table = np.zeros((3, 2), dtype=np.int64)
    table[0] = (0, 0)
    table[q] = (s, 0)
    table[(-q) % 3] = (0, s)
    return table


def project_lattice(ij, m, n):
    """Image of lattice points under pi_m (fold onto G_m).

    Inside each size-2**m triangle the map is the isometry sending every
    labelled corner to the corner of G_m with the same label.
    """
    ij = np.asarray(ij, dtype=np.int64)
    s = 1 << (m + n)
    I, J = ij[..., 0] // s, ij[..., 1] // s
    u, v = ij[..., 0] - I * s, ij[..., 1] - J * s
    # a point of V_m can sit at u = v = 0 of a triangle that does not exist;
    # the label of A is still the label of the point so the formula holds
    lA = ((I - J) * (1 << m)) % 3
    q = (1 << m) % 3
    tab = _corner_table(m, n)
    PA, PB, PC = tab[lA], tab[(lA + q) % 3], tab[(lA - q) % 3]
    out = ((s - u - v)[..., None] * PA + u[..., None] * PB + v[..., None] * PC) // s
    return out


def copy_origins(m, K):
    """Lower-left corners (in units of 2**m) of the size-2**m triangles of G_K."""
    return cell_origins(K - m)


def unfold_lattice(ij, m, K, n):
    """Images of points of G_m in every size-2**m triangle of G_K.

    Returns an array of shape (npts, 3**(K-m), 2).  Copy c is the inverse of
    pi_m restricted to the c-th triangle, so pi_m maps every copy back.
    """
    if K < m:
        raise ValidationError("unfolding needs K >= m")
    ij = np.asarray(ij, dtype=np.int64).reshape(-1, 2)
    s = 1 << (m + n)
    T = copy_origins(m, K)                   # (ncopy, 2) in units of s
    lA = ((T[:, 0] - T[:, 1]) * (1 << m)) % 3
    q = (1 << m) % 3
    A = T * s
    P = np.stack([A, A + (s, 0), A + (0, s)], axis=1)        # corners A, B, C
    labs = np.stack([lA, (lA + q) % 3, (lA - q) % 3], axis=1)
    # order the triangle corners by label so that P_by_label[c, l] has label l
    order = np.argsort(labs, axis=1)
    P_by_label = np.take_along_axis(P, order[..., None], axis=1)
    # barycentric weights of the points w.r.t. the corners of G_m, by label
    u, v = ij[:, 0], ij[:, 1]
    w_O, w_E1, w_E2 = s - u - v, u, v
    W = np.zeros((len(ij), 3), dtype=np.int64)
    W[:, 0] = w_O
    W[:, q] += w_E1
    W[:, (-q) % 3] += w_E2
    out = np.einsum("pl,cld->pcd", W, P_by_label) // s
    return out


# -- invariant checks ---------------------------------------------------------

def expected_counts(M, n):
    """(|V|, |E|) of G_M at resolution n."""
    k = M + n
    return 3 * (3 ** k + 1) // 2, 3 ** (k + 1)


def label_bijection_ok(g):
    """Every size-2**k triangle, 0 <= k <= M, carries the labels a, b, c once each."""
    for k in range(g.M + 1):
        s = 1 << (k + g.n)
        origins = cell_origins(g.M - k) * s
        pts = np.stack([origins, origins + (s, 0), origins + (0, s)], axis=1).reshape(-1, 2)
        lab = lattice_label(pts, g.n).reshape(-1, 3)
        if np.any(np.sort(lab, axis=1) != np.arange(3)):
            return False
    return True


def regularity_fit(g, samples=50, rng=None):
    """Slope of log m(B(x, r)) against log r over dyadic r in [2**(2-n), 2**(M-1)].

    Ball masses count whole cells inside the ball; the vertex-mass sum of
    `ball_measure` carries a boundary layer that flattens the slope on
    coarse graphs.  Also returns the smallest c with
    c**-1 r**d <= m(B(x, r)) <= c r**d on the sample.
    Returns (slope, c, radii, mean ball masses).
    """
    rng = rng or np.random.default_rng(0)
    radii = 2.0 ** np.arange(2 - g.n, g.M)
    if len(radii) < 3:
        raise ValidationError("resolution too coarse for a regularity fit")
    xs = rng.choice(g.nv, size=min(samples, g.nv), replace=False)
    far = g.dist(xs)[:, g.cells].max(axis=2)
    ball = np.stack([(far <= r + 1e-12).sum(axis=1) * g.cell_mass for r in radii], axis=1)
    slope = np.polyfit(np.log(radii), np.log(ball.mean(axis=0)), 1)[0]
    ratio = ball / radii ** D_F
    c = float(max(ratio.max(), 1 / ratio.min()))
    return float(slope), c, radii, ball.mean(axis=0)


def invariant_report(g, samples=50, seed=0):
    """Exact counts, mass, degrees and labels, plus the regularity fit."""
    nv, ne = expected_counts(g.M, g.n)
    deg_ok = bool(np.all(g.deg[g.corners] == 2) and np.all(g.deg[g.interior] == 4))
    rep = dict(M=g.M, n=g.n, nv=g.nv, ne=len(g.edges), nv_expected=nv, ne_expected=ne,
               total_mass=str(g.total_mass()), mass_ok=g.total_mass() == 3 ** g.M,
               degree_ok=deg_ok, labels_ok=label_bijection_ok(g))
    rep["counts_ok"] = g.nv == nv and len(g.edges) == ne
    if g.M + g.n >= 5:         # at least three dyadic radii
        try:
            slope, c, _, _ = regularity_fit(g, samples, np.random.default_rng(seed))
            rep.update(regularity_slope=slope, regularity_c=c,
                       regularity_ok=abs(slope - D_F) <= 0.15)
        except ValidationError:
            pass
    return rep
