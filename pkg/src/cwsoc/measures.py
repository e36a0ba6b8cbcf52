"""Symmetric source measures: densities, atoms, moments and samplers."""

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import _quadrature as quad

INV_SQRT_E = math.exp(-0.5)

_DENSITY_HOOKS = {}


class MeasureError(ValueError):
    """Invalid or unsupported measure description."""


@dataclass(frozen=True, eq=False)
class SourceMeasure:
    """A symmetric probability measure on the real line.

    The measure is ``cont_mass * pdf(z) dz`` on ``[-support, support]`` plus
    point masses ``atom_weights`` at ``atoms``.  Moments are cached at
    construction; instances are immutable and safe to share.
    """

    kind: str
    params: Mapping
    variance: float
    mu4: float
    mu6: float
    v0: float
    atom_at_zero: float
    atoms: np.ndarray
    atom_weights: np.ndarray
    cont_mass: float
    cont_logpdf: Optional[Callable] = None
    support: float = np.inf
    scan_radius: float = 10.0
    _sampler: Callable = field(default=None, repr=False)
    _tilted_sampler: Callable = field(default=None, repr=False)

    @property
    def has_density(self):
        return self.cont_mass == 1.0

    @property
    def is_degenerate(self):
        """True when (Z, Z^2) lives on a line, i.e. a symmetric two-point law."""
        return self.cont_mass == 0.0 and np.count_nonzero(self.atom_weights) == 2

    @property
    def support_sq_bounds(self):
        """``(K^2, L^2)``: inf and sup of ``z^2`` over the support."""
        lo, hi = np.inf, 0.0
        if self.cont_mass > 0:
            lo, hi = 0.0, self.support ** 2
        if self.atoms.size:
            sq = self.atoms[self.atom_weights > 0] ** 2
            lo, hi = min(lo, sq.min()), max(hi, sq.max())
        return lo, hi

    def pdf(self, z):
        """Density of the continuous part (times its mass); zero if there is none."""
        z = np.asarray(z, dtype=float)
        if self.cont_logpdf is None:
            return np.zeros_like(z)
        with np.errstate(divide="ignore", over="ignore"):
            return self.cont_mass * np.exp(self.cont_logpdf(z))

    def sample(self, rng, size):
        return self._sampler(rng, size)

    def sample_tilted(self, rng, u, size):
        """Draw from ``exp(u z) rho(dz) / E[exp(uZ)]``."""
        if u == 0.0:
            return self._sampler(rng, size)
        return self._tilted_sampler(rng, u, size)

    def tilted(self, u, v, jmax=4):
        """``(log E[e^{uZ+vZ^2}], tilted moments f_0..f_jmax, converged)``."""
        with np.errstate(divide="ignore"):
            log_aw = np.log(self.atom_weights)
            cont_logmass = math.log(self.cont_mass) if self.cont_mass > 0 else -np.inf
        return quad.tilted_log_sums(
            u, v, jmax,
            logpdf=self.cont_logpdf if self.cont_mass > 0 else None,
            support=self.support, radius=self.scan_radius,
            cont_logmass=cont_logmass, atoms=self.atoms, log_atom_weights=log_aw,
        )


# ----------------------------------------------------------------- samplers

class _GridInverseCDF:
    """Inverse-CDF sampler from a tabulated log-density."""

    def __init__(self, logpdf, lo, hi, radius, points=2**14 + 1):
        a, b = quad.active_interval(logpdf, lo, hi, radius, cut=45.0)
        self.z = np.linspace(a, b, points)
        with np.errstate(divide="ignore"):
            g = logpdf(self.z)
        p = np.exp(g - np.max(g))
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(self.z))])
        if np.any(np.diff(cdf) < 0):
            raise FloatingPointError("tabulated CDF is not monotone")
        self.cdf = cdf / cdf[-1]

    def __call__(self, rng, size):
        return np.interp(rng.random(size), self.cdf, self.z)


def _discrete_sampler(positions, weights):
    def draw(rng, size):
        return rng.choice(positions, size=size, p=weights)

    def draw_tilted(rng, u, size):
        lw = np.log(weights) + u * positions
        w = np.exp(lw - lw.max())
        return rng.choice(positions, size=size, p=w / w.sum())

    return draw, draw_tilted


# ------------------------------------------------------------- constructors

def gaussian(variance=1.0):
    """Centered Gaussian with the given variance."""
    if not variance > 0:
        raise MeasureError("Gaussian variance must be positive")
    s = math.sqrt(variance)
    lognorm = -0.5 * math.log(2 * math.pi * variance)

    def logpdf(z):
        return lognorm - 0.5 * z * z / variance

    return SourceMeasure(
        kind="gaussian", params={"variance": variance},
        variance=variance, mu4=3 * variance ** 2, mu6=15 * variance ** 3,
        v0=1 / (2 * variance), atom_at_zero=0.0,
        atoms=np.empty(0), atom_weights=np.empty(0), cont_mass=1.0,
        cont_logpdf=logpdf, support=np.inf, scan_radius=12 * s,
        _sampler=lambda rng, size: rng.normal(0.0, s, size),
        _tilted_sampler=lambda rng, u, size: rng.normal(u * variance, s, size),
    )


def bernoulli(c=1.0):
    """Symmetric two-point law ``(delta_{-c} + delta_c)/2``."""
    if not c > 0:
        raise MeasureError("Bernoulli amplitude c must be positive")
    m = discrete([-c, c], [0.5, 0.5])
    return _replace(m, kind="bernoulli", params={"c": c})


def uniform(a=1.0):
    """Uniform law on ``[-a, a]``."""
    if not a > 0:
        raise MeasureError("uniform half-width a must be positive")
    logc = -math.log(2 * a)

    def logpdf(z):
        return np.where(np.abs(z) <= a, logc, -np.inf)

    def draw_tilted(rng, u, size):
        # inverse CDF of exp(|u| z) on [-a, a], reflected for u < 0
        k = abs(u)
        q = rng.random(size)
        z = a + np.log1p(-q * -np.expm1(-2 * k * a)) / k
        return z if u > 0 else -z

    return SourceMeasure(
        kind="uniform", params={"a": a},
        variance=a ** 2 / 3, mu4=a ** 4 / 5, mu6=a ** 6 / 7,
        v0=np.inf, atom_at_zero=0.0,
        atoms=np.empty(0), atom_weights=np.empty(0), cont_mass=1.0,
        cont_logpdf=logpdf, support=a, scan_radius=a,
        _sampler=lambda rng, size: rng.uniform(-a, a, size),
        _tilted_sampler=draw_tilted,
    )


def discrete(positions, weights):
    """Symmetric law with finitely many atoms."""
    pos = np.asarray(positions, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pos.shape != w.shape or pos.ndim != 1 or pos.size == 0:
        raise MeasureError("positions and weights must be 1-d arrays of equal length")
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-12):
        raise MeasureError("atom weights must be nonnegative and sum to 1")
    order = np.argsort(pos)
    pos, w = pos[order], w[order]
    keep = w > 0
    pos, w = pos[keep], w[keep]
    if not (np.allclose(pos, -pos[::-1], atol=1e-12) and np.allclose(w, w[::-1], atol=1e-14)):
        raise MeasureError("atoms must be placed symmetrically about 0")
    var = float(np.dot(w, pos ** 2))
    if var <= 0:
        raise MeasureError("degenerate measure: Dirac mass at 0")
    draw, draw_tilted = _discrete_sampler(pos, w)
    return SourceMeasure(
        kind="discrete", params={"positions": tuple(pos), "weights": tuple(w)},
        variance=var, mu4=float(np.dot(w, pos ** 4)), mu6=float(np.dot(w, pos ** 6)),
        v0=np.inf, atom_at_zero=float(w[pos == 0].sum()),
        atoms=pos, atom_weights=w, cont_mass=0.0,
        support=float(np.abs(pos).max()), scan_radius=float(np.abs(pos).max()),
        _sampler=draw, _tilted_sampler=draw_tilted,
    )


def zero_atom_mixture(p0, base):
    """``p0 * delta_0 + (1 - p0) * base``."""
    if not 0 <= p0 < 1:
        raise MeasureError("atom at zero must have mass in [0, 1)")
    q = 1.0 - p0
    atoms = np.concatenate([base.atoms, [0.0]])
    aw = np.concatenate([q * base.atom_weights, [p0]])
    order = np.argsort(atoms, kind="stable")
    atoms, aw = atoms[order], aw[order]
    # merge duplicate zeros
    uniq, inv = np.unique(atoms, return_inverse=True)
    aw = np.bincount(inv, weights=aw)
    atoms = uniq

    def draw(rng, size):
        out = base.sample(rng, size)
        out[rng.random(size) < p0] = 0.0
        return out

    def draw_tilted(rng, u, size):
        # mass of the base under the tilt relative to the zero atom
        log_base = base.tilted(u, 0.0, jmax=0)[0]
        pz = p0 / (p0 + q * math.exp(log_base))
        out = base.sample_tilted(rng, u, size)
        out[rng.random(size) < pz] = 0.0
        return out

    return SourceMeasure(
        kind="mixture", params={"p0": p0, "base": base.kind, **base.params},
        variance=q * base.variance, mu4=q * base.mu4, mu6=q * base.mu6,
        v0=base.v0, atom_at_zero=float(aw[atoms == 0].sum()),
        atoms=atoms, atom_weights=aw, cont_mass=q * base.cont_mass,
        cont_logpdf=base.cont_logpdf, support=base.support, scan_radius=base.scan_radius,
        _sampler=draw, _tilted_sampler=draw_tilted,
    )


def symmetric_density(pdf, support=np.inf, v0=None, name="density", symmetry_tol=1e-8):
    """Wrap a user density.

    ``pdf`` must be vectorised.  It is checked for symmetry, symmetrised as
    ``(f(z) + f(-z))/2`` and renormalised by quadrature.  ``v0`` is the
    declared bound with finite ``E exp(v0 Z^2)``; it is required for
    unbounded support and validated numerically.
    """
    if support == np.inf and v0 is None:
        raise MeasureError("unbounded densities need a declared v0")
    if v0 is not None and not v0 > 0:
        raise MeasureError("v0 must be positive")
    probe_r = support if np.isfinite(support) else 8.0
    grid = np.linspace(0.0, probe_r, 1000)
    fp, fm = np.asarray(pdf(grid), float), np.asarray(pdf(-grid), float)
    if np.any(fp < 0) or np.any(fm < 0):
        raise MeasureError("density takes negative values")
    peak = max(fp.max(), fm.max())
    if peak <= 0:
        raise MeasureError("density vanishes on the probe grid")
    if np.max(np.abs(fp - fm)) > symmetry_tol * peak:
        raise MeasureError("density is not symmetric (max |f(z)-f(-z)| = %.3g)"
                           % np.max(np.abs(fp - fm)))

    def raw_logpdf(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            f = 0.5 * (np.asarray(pdf(z), float) + np.asarray(pdf(-z), float))
            f = np.where(np.abs(z) <= support, f, 0.0)
            return np.log(f)

    radius = _tail_radius(raw_logpdf, support)
    log_norm, mom, ok = quad.tilted_log_sums(0.0, 0.0, 6, logpdf=raw_logpdf,
                                             support=support, radius=radius)
    if not ok:
        raise MeasureError("normalisation quadrature did not converge")

    def logpdf(z):
        return raw_logpdf(z) - log_norm

    if v0 is None:
        v0 = np.inf
    elif np.isfinite(support):
        v0 = np.inf
    else:
        _check_v0(logpdf, v0, radius)
    if mom[2] <= 0:
        raise MeasureError("degenerate measure: zero variance")

    sampler = _GridInverseCDF(logpdf, -support, support, radius)

    def draw_tilted(rng, u, size):
        return _GridInverseCDF(lambda z: logpdf(z) + u * z, -support, support, radius)(rng, size)

    return SourceMeasure(
        kind="density", params={"name": name},
        variance=float(mom[2]), mu4=float(mom[4]), mu6=float(mom[6]),
        v0=v0, atom_at_zero=0.0,
        atoms=np.empty(0), atom_weights=np.empty(0), cont_mass=1.0,
        cont_logpdf=logpdf, support=support, scan_radius=radius,
        _sampler=sampler, _tilted_sampler=draw_tilted,
    )


def _check_v0(logpdf, v0, radius):
    """Reject ``v0`` when ``log f(z) + v0 z^2`` does not decay on the range where ``f > 0``."""
    z = np.linspace(0.0, 64 * radius, 4097)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = logpdf(z) + v0 * z * z
    fin = np.nonzero(np.isfinite(h))[0]
    last = fin[-1]
    if last < 8:
        raise MeasureError("density support too narrow to validate v0")
    z_end = z[last]
    h_mid = logpdf(np.array([0.75 * z_end]))[0] + v0 * (0.75 * z_end) ** 2
    if not (h[last] < np.max(h[fin]) - 1.0 and h[last] < h_mid):
        raise MeasureError("E exp(v0 Z^2) appears infinite for v0=%g" % v0)


def _tail_radius(logpdf, support):
    if np.isfinite(support):
        return support
    r = 1.0
    for _ in range(60):
        z = np.linspace(0.0, r, 257)
        g = logpdf(z)
        if g[-1] < np.max(g) - quad.CUT:
            return r
        r *= 2
    raise MeasureError("density tails do not decay")


def _replace(m, **changes):
    from dataclasses import replace
    return replace(m, **changes)


def register_density(name, pdf, support=np.inf, v0=None):
    """Register a named density hook usable from config files (``kind = density``)."""
    _DENSITY_HOOKS[name] = (pdf, support, v0)


def make_measure(spec):
    """Build a measure from a flat mapping such as ``{"kind": "gaussian", "variance": 1}``.

    Recognised kinds: gaussian (variance), bernoulli (c), uniform (a),
    discrete (positions, weights; comma separated), density (name of a
    registered hook), each optionally with ``atom0`` (mass added at zero) and
    ``v0`` (override, only lowered).
    """
    spec = {k.strip().lower(): v for k, v in dict(spec).items()}
    kind = str(spec.get("kind", "")).strip().lower()

    def num(key, default=None):
        if key not in spec:
            if default is None:
                raise MeasureError("measure kind %r needs parameter %r" % (kind, key))
            return default
        try:
            return float(spec[key])
        except (TypeError, ValueError) as exc:
            raise MeasureError("parameter %r is not a number: %r" % (key, spec[key])) from exc

    def nums(key):
        raw = spec.get(key)
        if raw is None:
            raise MeasureError("measure kind %r needs parameter %r" % (kind, key))
        if isinstance(raw, str):
            raw = [s for s in raw.replace(";", ",").split(",") if s.strip()]
        return [float(s) for s in raw]

    if kind == "gaussian":
        m = gaussian(num("variance", num("sigma2", 1.0)))
    elif kind == "bernoulli":
        m = bernoulli(num("c", 1.0))
    elif kind == "uniform":
        m = uniform(num("a", 1.0))
    elif kind == "discrete":
        m = discrete(nums("positions"), nums("weights"))
    elif kind == "density":
        name = spec.get("name")
        if name not in _DENSITY_HOOKS:
            raise MeasureError("no density hook registered under %r" % name)
        pdf, support, v0 = _DENSITY_HOOKS[name]
        m = symmetric_density(pdf, support, v0, name=name)
    else:
        raise MeasureError("unknown measure kind %r" % kind)
    if "atom0" in spec and float(spec["atom0"]) > 0:
        m = zero_atom_mixture(num("atom0"), m)
    if "v0" in spec:
        v0 = num("v0")
        if not 0 < v0 <= m.v0:
            raise MeasureError("v0 override must lie in (0, %g]" % m.v0)
        m = _replace(m, v0=v0)
    return m


def sample_iid(m, n, seed):
    """``n`` independent draws from ``m`` as a :class:`Configuration`."""
    from .sampler import Configuration
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    return Configuration.from_entries(m.sample(rng, int(n)))


# ------------------------------------------------------- hypothesis checks

@dataclass(frozen=True)
class ConditionReport:
    has_density: bool
    finite_atoms: bool
    gap_above_zero: bool
    atom_below_inv_sqrt_e: bool
    atom_at_zero: float

    @property
    def overall(self):
        return (self.has_density or self.finite_atoms or self.gap_above_zero
                or self.atom_below_inv_sqrt_e)


def theorem1_conditions(m):
    """Which of the four alternative hypotheses of the convergence theorem hold."""
    gap = m.cont_mass == 0.0 and m.atom_at_zero == 0.0
    return ConditionReport(
        has_density=m.has_density,
        finite_atoms=m.cont_mass == 0.0,
        gap_above_zero=gap,
        atom_below_inv_sqrt_e=m.atom_at_zero < INV_SQRT_E,
        atom_at_zero=m.atom_at_zero,
    )


@dataclass(frozen=True)
class ConditionCResult:
    p: float
    value: float
    inner: float
    outer: float
    finite: bool
    converged: bool


def condition_c_integral(m, p=1.5, rtol=1e-10):
    """``int int f^p(x+y) f^p(y) |x|^{1-p} dx dy`` split at ``|x| = 1``.

    The ``|x| <= 1`` part uses ``x = t^{1/(2-p)}`` which removes the
    singularity; ``p = 2`` is reported as divergent.
    """
    if not m.has_density:
        raise MeasureError("condition (c) needs a measure with a density")
    if not 1 < p <= 2:
        raise ValueError("p must lie in (1, 2]")
    if p == 2:
        return ConditionCResult(p, np.inf, np.inf, np.nan, False, True)
    a = m.support if np.isfinite(m.support) else m.scan_radius
    xmax = 2 * a

    def fp(z):
        with np.errstate(divide="ignore"):
            return np.exp(p * m.cont_logpdf(z))

    def kernel(x):
        # K(x) = int f^p(x+y) f^p(y) dy for x >= 0; support of the integrand in y
        lo, hi = -a, a - x
        if hi <= lo:
            return 0.0
        val, _ = quad.integrate(lambda y: fp(x + y) * fp(y), lo, hi, rtol=rtol * 0.1,
                                atol=1e-300)
        return val

    kvec = np.vectorize(kernel)
    mexp = 1.0 / (2.0 - p)
    bps = [(xmax) ** (1 / mexp)] if xmax < 1 else []
    inner, ok1 = quad.integrate(lambda t: 2 * mexp * kvec(t ** mexp), 0.0, 1.0,
                                rtol=rtol, breakpoints=bps)
    outer, ok2 = 0.0, True
    if xmax > 1:
        outer, ok2 = quad.integrate(lambda x: 2 * x ** (1 - p) * kvec(x), 1.0, xmax,
                                    rtol=rtol, atol=1e-300)
    value = inner + outer
    finite = bool(ok1 and ok2 and np.isfinite(value))
    return ConditionCResult(p, value if finite else np.inf, inner, outer, finite, ok1 and ok2)
