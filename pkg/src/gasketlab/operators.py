"""Discrete generators, subordination by functional calculus, Schrodinger spectra.

The walk generator on a level-n graph is H = kappa * 5**n * (I - P), with P
the simple random walk.  P is reversible for the vertex masses, so
D**0.5 H D**-0.5 is symmetric and every spectral computation is done in that
gauge.  Mass-orthonormal eigenfunctions are U / sqrt(mass).

Subordination is exact in this model: phi(H) = U phi(Lambda) U^T.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as spla

from .errors import CapacityError, SolverError, ValidationError
from .gasket import D_F, D_W, GasketGraph
from .subordinators import PureDrift

DENSE_CAP = 3000
REFLECTED, DIRICHLET = "reflected", "dirichlet"
SUB_FIRST, KILL_FIRST = "subordinate_first", "kill_first"


def _check_mode(mode):
    if mode not in (REFLECTED, DIRICHLET):
        raise ValidationError(f"unknown boundary mode {mode!r}")


class Generator:
    """Walk generator of a gasket graph in the symmetric gauge.

    Args:
        g: GasketGraph.
        mode: "reflected" keeps all vertices, "dirichlet" removes the corners.
        kappa: time constant.
    """

    def __init__(self, g, mode=REFLECTED, kappa=1.0):
        _check_mode(mode)
        if kappa <= 0:
            raise ValidationError("kappa must be positive")
        self.g, self.mode, self.kappa = g, mode, float(kappa)
        self.rate = self.kappa * 5.0 ** g.n
        self.keep = np.arange(g.nv) if mode == REFLECTED else np.flatnonzero(g.interior)
        self.mass = g.mass[self.keep]
        self._spec = None

    @property
    def dim(self):
        return len(self.keep)

    def sym_full(self):
        """Sparse symmetric matrix of the reflected generator on all vertices."""
        g = self.g
        s = 1.0 / np.sqrt(g.deg.astype(float))
        S = sparse.diags(s) @ g.adjacency @ sparse.diags(s)
        return (self.rate * (sparse.identity(g.nv) - S)).tocsr()

    def sym(self):
        """Sparse symmetric generator restricted to the kept vertices."""
        H = self.sym_full()
        if self.mode == DIRICHLET:
            H = H[self.keep][:, self.keep]
        return H.tocsr()

    def transition(self):
        """Row-stochastic matrix P of the simple random walk (sparse)."""
        return sparse.diags(1.0 / self.g.deg) @ self.g.adjacency

    def spectrum(self):
        if self._spec is None:
            if self.dim > DENSE_CAP:
                raise CapacityError(f"dense spectrum of dimension {self.dim} exceeds {DENSE_CAP}")
            w, U = linalg.eigh(self.sym().toarray())
            # round-off around the zero mode would otherwise leak through
            # non-smooth exponents such as lam**0.5
            w[w < 1e-12 * self.rate] = 0.0
            self._spec = Spectrum(w, U, self.mass)
        return self._spec


@dataclass
class Spectrum:
    """Eigenpairs in the symmetric gauge; `partial` marks a truncated solve."""
    values: np.ndarray
    vecs: np.ndarray
    mass: np.ndarray
    partial: bool = False

    @property
    def efuncs(self):
        """Mass-orthonormal eigenfunctions as columns."""
        return self.vecs / np.sqrt(self.mass)[:, None]

    def kernel(self, f):
        """Density sum_k f(lam_k) phi_k(x) phi_k(y) with respect to the masses."""
        E = self.efuncs
        return (E * f(self.values)) @ E.T

    def operator(self, f):
        """Symmetric-gauge matrix U f(Lambda) U^T."""
        return (self.vecs * f(self.values)) @ self.vecs.T


def heat_kernel(gen, t, method="spectral"):
    """Transition density g(t, x, y) of the walk, w.r.t. the vertex masses.

    method="series" uses uniformization: a Poisson series in P at a short time
    step followed by repeated squaring.  Every term is non-negative, so small
    entries keep full relative accuracy (the eigen-expansion does not).
    """
    if t < 0:
        raise ValidationError("negative time")
    if method == "spectral":
        return gen.spectrum().kernel(lambda w: np.exp(-t * w))
    if method != "series":
        raise ValidationError(f"unknown kernel method {method!r}")
    P = gen.transition()
    if gen.mode == DIRICHLET:
        P = P[gen.keep][:, gen.keep]
    P = P.tocsr()
    rt = gen.rate * t
    s = max(0, int(np.ceil(np.log2(max(rt, 1e-300)))))
    x = rt / 2.0 ** s                      # x <= 1
    term = np.eye(gen.dim)
    Q = term.copy()
    for k in range(1, 40):
        term = (P @ term) * (x / k)
        Q += term
    Q *= np.exp(-x)
    for _ in range(s):
        Q = Q @ Q
    return Q / gen.mass[None, :]


class SchrodingerProblem:
    """phi(H) + V on a gasket graph.

    Args:
        g: GasketGraph.
        phi: Laplace exponent.
        mode: boundary mode.
        order: for Dirichlet mode, "subordinate_first" subordinates the reflected
            generator and then deletes the corner rows and columns (the killed
            subordinate process); "kill_first" subordinates the Dirichlet walk.
        kappa: walk time constant.
    """

    def __init__(self, g, phi, mode=DIRICHLET, order=SUB_FIRST, kappa=1.0):
        _check_mode(mode)
        if order not in (SUB_FIRST, KILL_FIRST):
            raise ValidationError(f"unknown order {order!r}")
        self.g, self.phi, self.mode, self.order = g, phi, mode, order
        self.gen = Generator(g, mode, kappa)
        self.keep = self.gen.keep
        self.mass = self.gen.mass
        self._base = None

    @property
    def dim(self):
        return len(self.keep)

    @property
    def drift_only(self):
        return isinstance(self.phi, PureDrift)

    def base(self):
        """Dense symmetric-gauge matrix of phi(H) on the kept vertices."""
        if self._base is None:
            if self.g.nv > DENSE_CAP:
                raise CapacityError(f"dense operator of dimension {self.g.nv} exceeds {DENSE_CAP}")
            if self.drift_only:
                self._base = self.phi.b * self.gen.sym().toarray()
            else:
                src = self.gen if self.order == KILL_FIRST else Generator(self.g, REFLECTED, self.gen.kappa)
                f = lambda w: np.asarray(self.phi(np.maximum(w, 0.0)))  # noqa: E731
                A = src.spectrum().operator(f)
                if self.mode == DIRICHLET and self.order == SUB_FIRST:
                    A = A[np.ix_(self.keep, self.keep)]
                self._base = 0.5 * (A + A.T)
        return self._base

    def restrict(self, V):
        """Potential values on the kept vertices (V may be given on all vertices)."""
        if V is None:
            return np.zeros(self.dim)
        V = np.asarray(V, dtype=float)
        if V.shape == (self.g.nv,):
            V = V[self.keep]
        if V.shape != (self.dim,):
            raise ValidationError("potential has the wrong length")
        if np.any(V < 0) or not np.all(np.isfinite(V)):
            raise ValidationError("potential must be finite and non-negative")
        return V

    def matrix(self, V=None):
        return self.base() + np.diag(self.restrict(V))

    def sparse_matrix(self, V=None):
        if not self.drift_only:
            raise ValidationError("only the pure-drift operator is sparse")
        return (self.phi.b * self.gen.sym() + sparse.diags(self.restrict(V))).tocsr()

    def eigvalsh(self, V=None):
        return np.maximum(linalg.eigh(self.matrix(V), eigvals_only=True), 0.0)

    def spectrum(self, V=None, k=None):
        """Eigenpairs of phi(H) + V.  Above the dense cap only the lowest k are
        computed with Lanczos (pure drift only) and the spectrum is partial."""
        if self.g.nv <= DENSE_CAP:
            w, U = linalg.eigh(self.matrix(V))
            return Spectrum(np.maximum(w, 0.0), U, self.mass)
        if not self.drift_only:
            raise CapacityError("subordinate operators above the dense cap are not supported")
        k = k or 6
        A = self.sparse_matrix(V)
        try:
            w, U = spla.eigsh(A, k=k, sigma=-1e-8 * self.gen.rate, which="LM")
        except (spla.ArpackNoConvergence, RuntimeError) as err:
            raise SolverError(f"Lanczos failed: {err}") from None
        order = np.argsort(w)
        return Spectrum(np.maximum(w[order], 0.0), U[:, order], self.mass, partial=True)

    def principal(self, V=None):
        """Bottom of the spectrum and its mass-normalised, positive eigenfunction."""
        if self.g.nv <= DENSE_CAP:
            w, U = linalg.eigh(self.matrix(V), subset_by_index=[0, 0])
        elif self.drift_only:
            w, U = _lowest_sparse(self.sparse_matrix(V), self.gen.rate)
        else:
            raise CapacityError("subordinate operators above the dense cap are not supported")
        f = U[:, 0] / np.sqrt(self.mass)
        return float(max(w[0], 0.0)), f * np.sign(f.sum())

    def kernel(self, t, V=None):
        """Semigroup density of exp(-t(phi(H) + V)) w.r.t. the masses."""
        sp = self.spectrum(V)
        if sp.partial:
            raise CapacityError("kernel needs the full spectrum")
        return sp.kernel(lambda w: np.exp(-t * w))


def _lowest_sparse(A, scale):
    try:
        w, U = spla.eigsh(A, k=1, sigma=-1e-6 * scale, which="LM")
    except (spla.ArpackNoConvergence, RuntimeError) as err:
        raise SolverError(f"Lanczos failed: {err}") from None
    return w, U


def principal_sparse(A, mass, scale):
    """Lowest eigenpair of a sparse symmetric-gauge operator (value, eigenfunction)."""
    w, U = _lowest_sparse(A, scale)
    f = U[:, 0] / np.sqrt(mass)
    return float(max(w[0], 0.0)), f * np.sign(f.sum())


def subordinate_kernel(problem, t):
    """p(t, x, y) of the (killed) subordinate walk with no potential."""
    return problem.kernel(t)


def trace_laplace(values, t, M):
    """(1 / 3**M) sum_k exp(-t lam_k), for scalar or array t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(-np.outer(t, values)).sum(axis=1) / 3.0 ** M


def decimation_ground(n):
    """Bottom Dirichlet eigenvalue of I - P at level n via spectral decimation.

    Starts from lam_1 = 1/2 (level 1) and inverts lam_k = lam_{k+1}(5 - 4 lam_{k+1})
    on the small branch.
    """
    lam = 0.5
    for _ in range(n - 1):
        lam = 2 * lam / (5 + np.sqrt(25 - 16 * lam))     # (5 - sqrt(25 - 16 lam)) / 8 without cancellation
    return lam


def bm_ground(n, kappa=1.0):
    """lambda_1 of the Dirichlet walk on G_0 at level n, time-scaled by 5**n."""
    return kappa * 5.0 ** n * decimation_ground(n)


def reflected_kernel_scaling_check(M, t, n):
    """Max relative deviation in g^M(t,x,y) = 2**(-Md) g^0(2**(-M d_w) t, x/2**M, y/2**M).

    G_M at resolution n and G_0 at resolution n + M are the same lattice; the
    right-hand side is computed from the G_0 graph independently.
    """
    gM, g0 = GasketGraph(M, n), GasketGraph(0, n + M)
    lhs = heat_kernel(Generator(gM), t, method="series")
    rhs = 2.0 ** (-M * D_F) * heat_kernel(Generator(g0), 2.0 ** (-M * D_W) * t, method="series")
    if not np.array_equal(gM.ij, g0.ij):
        raise SolverError("graphs do not share a lattice")
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def eigen_scaling_check(M, n, phi, V_M, mode=DIRICHLET):
    """Scaling of principal eigenvalues between G_M and G_0.

    Under pure drift b: lam_1^M(phi, V) = 2**(-M d_w) b lam_1^0(d_w, Vt) with
    Vt(x) = 2**(M d_w) / b * V(2**M x).  Otherwise with gamma = alpha1 it checks
    lam_1^M(phi, V) >= 2**(-M gamma) c lam_1^0(gamma, Vt), Vt = 2**(M gamma)/c V(2**M x),
    where c is the largest value in (0, 1] making phi >= c lam**(gamma/d_w) on
    the spectrum (so the inequality holds at the operator level).

    Both sides use the same boundary mode; corners of G_M and G_0 coincide
    on the shared lattice, so the Dirichlet form scales like the reflected one.

    Returns dict(lhs, rhs, c, deviation).
    """
    from .subordinators import StableWithDrift

    gM, g0 = GasketGraph(M, n), GasketGraph(0, n + M)
    V_M = np.asarray(V_M, dtype=float)
    lhs, _ = SchrodingerProblem(gM, phi, mode=mode).principal(V_M)
    if isinstance(phi, PureDrift):
        b = phi.b
        Vt = 2.0 ** (M * D_W) / b * V_M            # same vertex order on g0
        lam0, _ = SchrodingerProblem(g0, PureDrift(1.0), mode=mode).principal(Vt)
        rhs = 2.0 ** (-M * D_W) * b * lam0
        scale = abs(rhs) if abs(rhs) > 1e-9 else 1.0
        return dict(lhs=lhs, rhs=rhs, c=b, deviation=abs(lhs - rhs) / scale)
    gam = phi.alpha1
    w = Generator(gM).spectrum().values
    pos = w > 1e-12 * w.max()
    c = float(min(1.0, np.min(phi(w[pos]) / w[pos] ** (gam / D_W))))
    Vt = 2.0 ** (M * gam) / c * V_M
    lam0, _ = SchrodingerProblem(g0, StableWithDrift(0.0, gam), mode=mode).principal(Vt)
    rhs = 2.0 ** (-M * gam) * c * lam0
    scale = abs(rhs) if abs(rhs) > 1e-9 else 1.0
    return dict(lhs=lhs, rhs=rhs, c=c, deviation=(lhs - rhs) / scale)


def sup_kernel_constants(phi, Ms=(0, 1, 2), n=4, t=1.0):
    """Fit c in sup_x p^M(t,x,x) <= c * sum_a (t ^ 2**(M beta))**(-d/a) per M.

    Returns (dict M -> c_M, ratio max/min).
    """
    out = {}
    for M in Ms:
        g = GasketGraph(M, n)
        p = SchrodingerProblem(g, phi, mode=REFLECTED).kernel(t)
        s = min(t, 2.0 ** (M * phi.beta))
        a1 = phi.alpha1 or D_W
        a2 = phi.alpha2 or D_W
        shape = s ** (-D_F / a1) + s ** (-D_F / a2) + s ** (-D_F / phi.beta)
        out[M] = float(np.max(np.diag(p)) / shape)
    vals = list(out.values())
    return out, max(vals) / min(vals)
