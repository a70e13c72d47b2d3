"""Laplace exponents of subordinators and samplers for their increments.

Each preset is a Bernstein function phi(lam) = b*lam + psi(lam) with psi the
pure-jump part.  Exponents are expressed as gamma / d_w so that gamma plays
the role of a space-scaling index on the gasket.
"""
from math import gamma as gamma_fn

import numpy as np
from scipy import integrate, special

from .errors import SolverError, ValidationError
from .gasket import D_F, D_S, D_W

MAX_REJECT = 10**6


def _as_lam(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(~np.isfinite(lam)):
        raise ValidationError("Laplace exponent needs finite lambda >= 0")
    return lam


def kanter(rng, rho, size):
    """Positive rho-stable variables with E exp(-lam S) = exp(-lam**rho).

    Kanter's representation S = (A(U) / E)**((1 - rho) / rho) with
    Zolotarev's function A.
    """
    u = rng.uniform(0.0, 1.0, size)
    e = rng.exponential(1.0, size)
    pu = np.pi * u
    a = (np.sin(rho * pu) ** rho * np.sin((1 - rho) * pu) ** (1 - rho) / np.sin(pu)) ** (1 / (1 - rho))
    return (a / e) ** ((1 - rho) / rho)


def stable_levy(rho, s):
    """Levy density of the rho-stable subordinator with exponent lam**rho."""
    s = np.asarray(s, dtype=float)
    return rho / gamma_fn(1 - rho) * s ** (-1 - rho)


class LaplaceExponent:
    """Base class; presets set `b`, the scaling exponents and `psi`."""

    name = "base"
    b = 0.0
    alpha1 = alpha2 = delta = None
    beta = D_W

    def __call__(self, lam):
        lam = _as_lam(lam)
        return self.b * lam + self.psi(lam)

    def psi(self, lam):
        return np.zeros_like(lam)

    def params(self):
        return {}

    def __repr__(self):
        p = ",".join(f"{k}={v:.6g}" for k, v in self.params().items())
        return f"{self.name}({p})"

    @property
    def regime(self):
        if self.alpha1 is None:
            return "U1" if self.b > 0 else None
        return "U2" if self.b > 0 else "U3"

    @property
    def gamma_index(self):
        """Space-scaling index used by the reduction: d_w under U1, alpha1 otherwise."""
        return D_W if self.regime == "U1" else self.alpha1

    def exponents(self):
        return dict(alpha1=self.alpha1, alpha2=self.alpha2, beta=self.beta,
                    delta=self.delta, regime=self.regime)

    def derivative(self, lam):
        """phi'(lam) by central differences on a log scale."""
        lam = _as_lam(lam)
        h = 1e-6 * np.maximum(lam, 1e-8)
        return (self(lam + h) - self(np.maximum(lam - h, 0))) / (lam + h - np.maximum(lam - h, 0))

    # -- sampling -----------------------------------------------------------
    def sample(self, rng, t, size):
        """Draw `size` copies of S_t."""
        if t < 0:
            raise ValidationError("negative time")
        return self.b * t + self.sample_jump(rng, t, size)

    def sample_jump(self, rng, t, size):
        if self.alpha1 is None:
            return np.zeros(size)
        return InversionSampler.get(self, t).draw(rng, size)

    # -- Levy density -------------------------------------------------------
    def levy_density(self, s):
        """Levy density rho(s) of the jump part (numerical inversion by default)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.array([_levy_by_inversion(self, float(x)) for x in s])


class PureDrift(LaplaceExponent):
    name = "pure_drift"

    def __init__(self, b=1.0):
        if b <= 0:
            raise ValidationError("pure drift needs b > 0")
        self.b = float(b)

    def params(self):
        return dict(b=self.b)

    def levy_density(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))


class StableWithDrift(LaplaceExponent):
    """phi = b lam + lam**(g / d_w)."""
    name = "stable_drift"

    def __init__(self, b=0.0, g=D_W / 2):
        if not 0 < g < D_W:
            raise ValidationError("stable index must lie in (0, d_w)")
        if b < 0:
            raise ValidationError("drift must be >= 0")
        self.b, self.g = float(b), float(g)
        self.rho = self.g / D_W
        self.alpha1 = self.alpha2 = self.beta = self.delta = self.g

    def params(self):
        return dict(b=self.b, g=self.g)

    def psi(self, lam):
        return lam ** self.rho

    def sample_jump(self, rng, t, size):
        return t ** (1 / self.rho) * kanter(rng, self.rho, size)

    def levy_density(self, s):
        return stable_levy(self.rho, s)


class LogStableWithDrift(LaplaceExponent):
    """phi = b lam + lam**(g1/d_w) log(1+lam)**(g2/d_w)."""
    name = "log_stable_drift"

    def __init__(self, b=1.0, g1=1.0, g2=0.5):
        if not 0 < g1 < D_W or not -g1 < g2 < D_W - g1:
            raise ValidationError("need g1 in (0, d_w) and g2 in (-g1, d_w - g1)")
        self.b, self.g1, self.g2 = float(b), float(g1), float(g2)
        self.alpha1 = self.beta = g1 + g2
        self.alpha2 = g1
        self.delta = (g1 + D_W) / 2

    def params(self):
        return dict(b=self.b, g1=self.g1, g2=self.g2)

    def psi(self, lam):
        return lam ** (self.g1 / D_W) * np.log1p(lam) ** (self.g2 / D_W)


class StableMixture(LaplaceExponent):
    """phi = sum_i lam**(g_i / d_w)."""
    name = "stable_mix"

    def __init__(self, gs=(D_W / 3, 2 * D_W / 3)):
        gs = tuple(float(g) for g in gs)
        if not gs or any(not 0 < g < D_W for g in gs):
            raise ValidationError("mixture indices must lie in (0, d_w)")
        self.gs = gs
        self.alpha1 = self.beta = min(gs)
        self.alpha2 = self.delta = max(gs)

    def params(self):
        return {f"g{i + 1}": g for i, g in enumerate(self.gs)}

    def psi(self, lam):
        return sum(lam ** (g / D_W) for g in self.gs)

    def sample_jump(self, rng, t, size):
        out = np.zeros(size)
        for g in self.gs:
            r = g / D_W
            out += t ** (1 / r) * kanter(rng, r, size)
        return out

    def levy_density(self, s):
        return sum(stable_levy(g / D_W, s) for g in self.gs)


class NestedStable(LaplaceExponent):
    """phi = (lam + lam**(g1/d_w))**(g2/d_w).

    Sampled exactly as a composition: an outer g2-stable clock S drives the
    subordinator with exponent lam + lam**(g1/d_w).
    """
    name = "nested"

    def __init__(self, g1=1.0, g2=1.0):
        if not (0 < g1 < D_W and 0 < g2 < D_W):
            raise ValidationError("nested indices must lie in (0, d_w)")
        self.g1, self.g2 = float(g1), float(g2)
        self.alpha1 = self.beta = g1 * g2 / D_W
        self.alpha2 = self.delta = g2

    def params(self):
        return dict(g1=self.g1, g2=self.g2)

    def psi(self, lam):
        return (lam + lam ** (self.g1 / D_W)) ** (self.g2 / D_W)

    def sample_jump(self, rng, t, size):
        r1, r2 = self.g1 / D_W, self.g2 / D_W
        s = t ** (1 / r2) * kanter(rng, r2, size)
        return s + s ** (1 / r1) * kanter(rng, r1, size)


class LogCorrectedStable(LaplaceExponent):
    """phi = lam**(g1/d_w) log(1+lam)**(-g2/d_w)."""
    name = "log_corrected"

    def __init__(self, g1=1.5, g2=0.5):
        if not (0 < g1 < D_W and 0 < g2 < g1):
            raise ValidationError("need g1 in (0, d_w) and g2 in (0, g1)")
        self.g1, self.g2 = float(g1), float(g2)
        self.alpha1 = self.alpha2 = self.beta = g1 - g2
        self.delta = g1

    def params(self):
        return dict(g1=self.g1, g2=self.g2)

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = lam ** (self.g1 / D_W) * np.log1p(lam) ** (-self.g2 / D_W)
        return np.where(lam > 0, out, 0.0)


class RelativisticStable(LaplaceExponent):
    """phi = (lam + th**(d_w/a))**(a/d_w) - th.

    Sampled by exponential tilting of the a/d_w-stable law with rejection.
    Horizons are split into pieces of tilt-mass at most one so the
    acceptance rate stays above exp(-1).
    """
    name = "relativistic"

    def __init__(self, a=1.0, th=1.0):
        if not 0 < a < D_W or th <= 0:
            raise ValidationError("need a in (0, d_w) and th > 0")
        self.a, self.th = float(a), float(th)
        self.rho = a / D_W
        self.m = th ** (1 / self.rho)
        self.beta = D_W

    def params(self):
        return dict(a=self.a, th=self.th)

    @property
    def regime(self):
        return None

    def psi(self, lam):
        return (lam + self.m) ** self.rho - self.th

    def sample_jump(self, rng, t, size):
        pieces = max(1, int(np.ceil(t * self.th)))
        dt = t / pieces
        out = np.zeros(size)
        for _ in range(pieces):
            out += self._tilted(rng, dt, size)
        return out

    def _tilted(self, rng, dt, size):
        out = np.empty(size)
        todo = np.arange(size)
        it = 0
        scale = dt ** (1 / self.rho)
        while len(todo):
            it += len(todo)
            if it > MAX_REJECT * max(1, size):
                raise SolverError("relativistic rejection sampler exceeded its budget")
            x = scale * kanter(rng, self.rho, len(todo))
            ok = rng.uniform(size=len(todo)) < np.exp(-self.m * x)
            out[todo[ok]] = x[ok]
            todo = todo[~ok]
        return out

    def levy_density(self, s):
        s = np.asarray(s, dtype=float)
        return stable_levy(self.rho, s) * np.exp(-self.m * s)


PRESETS = {
    "pure_drift": PureDrift,
    "drift": PureDrift,
    "stable_drift": StableWithDrift,
    "stable": StableWithDrift,
    "log_stable_drift": LogStableWithDrift,
    "stable_mix": StableMixture,
    "nested": NestedStable,
    "log_corrected": LogCorrectedStable,
    "relativistic": RelativisticStable,
}


def parse_value(text):
    """Parse numbers with optional symbolic factor: '0.5dw', 'dw', '2d', '1/3dw'."""
    text = text.strip()
    for sym, val in (("dw", D_W), ("ds", D_S), ("d", D_F)):
        if text.endswith(sym):
            head = text[: -len(sym)]
            return (_parse_num(head) if head else 1.0) * val
    return _parse_num(text)


def _parse_num(text):
    try:
        if "/" in text:
            a, b = text.split("/")
            return float(a) / float(b)
        return float(text)
    except ValueError:
        raise ValidationError(f"cannot parse number {text!r}") from None


def parse_exponent(spec):
    """Build a preset from 'name:key=value,...', e.g. 'stable_drift:b=1,g=0.5dw'."""
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in PRESETS:
        raise ValidationError(f"unknown Laplace exponent {name!r}")
    kw = {}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise ValidationError(f"malformed parameter {item!r}")
        kw[k.strip()] = parse_value(v)
    cls = PRESETS[name]
    if name == "stable":
        kw.setdefault("b", 0.0)
    if cls is StableMixture:
        keys = sorted(kw, key=lambda k: int(k[1:]) if k[1:].isdigit() else -1)
        if any(not (k.startswith("g") and k[1:].isdigit()) for k in keys):
            raise ValidationError("stable_mix takes g1, g2, ...")
        return StableMixture([kw[k] for k in keys])
    try:
        return cls(**kw)
    except TypeError as err:
        raise ValidationError(f"bad parameters for {name}: {err}") from None


# -- numerical inversion ------------------------------------------------------

def _mp_psi(phi):
    import mpmath as mp

    def f(lam):
        if isinstance(phi, LogStableWithDrift):
            return lam ** (phi.g1 / D_W) * mp.log1p(lam) ** (phi.g2 / D_W)
        if isinstance(phi, LogCorrectedStable):
            return lam ** (phi.g1 / D_W) * mp.log1p(lam) ** (-phi.g2 / D_W)
        if isinstance(phi, NestedStable):
            return (lam + lam ** (phi.g1 / D_W)) ** (phi.g2 / D_W)
        if isinstance(phi, StableWithDrift):
            return lam ** phi.rho
        if isinstance(phi, StableMixture):
            return sum(lam ** (g / D_W) for g in phi.gs)
        if isinstance(phi, RelativisticStable):
            return (lam + phi.m) ** phi.rho - phi.th
        raise ValidationError(f"no analytic continuation for {phi!r}")
    return f


def _levy_by_inversion(phi, s):
    """rho(s) from s rho(s) = inverse Laplace transform of psi'(lam)."""
    import mpmath as mp
    f = _mp_psi(phi)
    with mp.workdps(30):
        dpsi = lambda p: mp.diff(f, p)  # noqa: E731
        val = mp.invertlaplace(dpsi, s, method="cohen")
    return float(val) / s


class InversionSampler:
    """Inverse-CDF sampler for the jump part, CDF tabulated by numerical Laplace inversion (Cohen acceleration)."""

    _cache = {}

    def __init__(self, phi, t, npts=240):
        import mpmath as mp
        f = _mp_psi(phi)
        xs = np.logspace(-12, 12, npts) * max(t, 1e-300) ** (D_W / max(phi.alpha1, 1e-3))
        cdf = []
        with mp.workdps(30):
            F = lambda p: mp.exp(-t * f(p)) / p  # noqa: E731
            for x in xs:
                try:
                    cdf.append(float(mp.invertlaplace(F, x, method="cohen")))
                except (ZeroDivisionError, ValueError):
                    cdf.append(np.nan)
        cdf = np.clip(np.nan_to_num(np.array(cdf), nan=0.0), 0.0, 1.0)
        cdf = np.maximum.accumulate(cdf)
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self.logx, self.cdf = np.log(xs[keep]), cdf[keep]

    @classmethod
    def get(cls, phi, t):
        key = (repr(phi), round(float(t), 14))
        if key not in cls._cache:
            cls._cache[key] = cls(phi, t)
        return cls._cache[key]

    def draw(self, rng, size):
        u = rng.uniform(size=size)
        u = np.clip(u, self.cdf[0], self.cdf[-1])
        return np.exp(np.interp(u, self.cdf, self.logx))


# -- bounds and classification ------------------------------------------------

def tail_bound(phi, t, A):
    """Upper bound t / (1 - 1/e) * int_0^{1/A} phi(lam) / lam dlam for P(S_t > A)."""
    if A <= 0 or t < 0:
        raise ValidationError("need A > 0 and t >= 0")
    if isinstance(phi, StableWithDrift):
        x = 1.0 / A
        integral = phi.b * x + x ** phi.rho / phi.rho
    elif isinstance(phi, PureDrift):
        integral = phi.b / A
    else:
        integral, _ = integrate.quad(lambda s: float(phi(s)) / s if s > 0 else 0.0,
                                     0.0, 1.0 / A, limit=200)
    return t / (1 - np.exp(-1.0)) * integral


def moment_integral(phi, t):
    """E[S_t**(-d_s/2)] = int_0^inf exp(-t phi(lam**(2/d_s))) dlam / Gamma(1 + d_s/2)."""
    p = D_S / 2
    f = lambda lam: float(np.exp(-t * phi(lam ** (1 / p))))  # noqa: E731
    val, _ = integrate.quad(f, 0, np.inf, limit=400)
    return val / special.gamma(1 + p)


def moment_bound_shape(phi, t):
    """t**(-d/alpha1) + t**(-d/alpha2): the comparison shape for the moment integral."""
    return t ** (-D_F / phi.alpha1) + t ** (-D_F / phi.alpha2)


def levy_floor(phi, s_grid=None):
    """Calibrate c in rho(s) >= c s**-1 * s**(-alpha/d_w) (alpha1 above 1, alpha2 below).

    Returns (c, floor) where floor(s) evaluates the lower bound.
    """
    if phi.alpha1 is None:
        raise ValidationError(f"{phi!r} has no jump part to bound")
    if s_grid is None:
        s_grid = np.logspace(-3, 3, 25)

    def shape(s):
        s = np.asarray(s, dtype=float)
        a = np.where(s >= 1, phi.alpha1, phi.alpha2)
        return s ** (-1 - a / D_W)

    ratio = phi.levy_density(s_grid) / shape(s_grid)
    c = float(min(1.0, ratio.min()))
    if c <= 0:
        raise ValidationError(f"Levy density floor is not positive for {phi!r}")
    return c, lambda s: c * shape(s)


def scaling_constants(phi, r0=1.0, rmin=1e-6, rmax=1e6, npts=41):
    """Grid estimates of a1..a4 in the weak scaling conditions for psi.

    Small scales: lam in (0,1], r in (0, r0].  Large scales: lam >= 1, r >= r0.
    Returns a dict with a1, a2 (minimum ratios), a3, a4 (maximum ratios) and
    a flag `consistent` (a1, a2 > 0 and a3, a4 finite on the grid).
    """
    if phi.alpha1 is None:
        raise ValidationError(f"{phi!r} has no scaling exponents")
    psi = lambda x: np.asarray(phi.psi(np.asarray(x, dtype=float)))  # noqa: E731
    lam_s = np.logspace(np.log10(rmin / r0), 0, npts)
    r_s = np.logspace(np.log10(rmin), np.log10(r0), npts)
    lam_l = np.logspace(0, np.log10(rmax / r0), npts)
    r_l = np.logspace(np.log10(r0), np.log10(rmax), npts)
    L, R = np.meshgrid(lam_s, r_s, indexing="ij")
    small = psi(L * R) / psi(R)
    lo_s = small / L ** (phi.alpha1 / D_W)
    hi_s = small / L ** (phi.beta / D_W)
    L, R = np.meshgrid(lam_l, r_l, indexing="ij")
    large = psi(L * R) / psi(R)
    lo_l = large / L ** (phi.alpha2 / D_W)
    hi_l = large / L ** (phi.delta / D_W)
    out = dict(a1=min(1.0, lo_s.min()), a2=min(1.0, lo_l.min()),
               a3=max(1.0, hi_s.max()), a4=max(1.0, hi_l.max()), r0=r0)
    out["consistent"] = bool(out["a1"] > 1e-3 and out["a2"] > 1e-3
                             and out["a3"] < 1e3 and out["a4"] < 1e3)
    return out
