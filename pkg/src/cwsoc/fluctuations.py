"""Limit laws and statistical tests for ``S_n`` and ``T_n``.

Under the model, ``mu4^{1/4} S_n / (sigma^2 n^{3/4})`` converges to the law
with density proportional to ``exp(-s^4/12)``, while ``(S_n/n, T_n/n)``
concentrates at ``(0, sigma^2)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, gammainc

from . import _quadrature as quad
from .cramer import solve_dual, violated_constraint
from .stats import jackknife, ks_critical, ks_discrete, ks_pvalue, ks_statistic


@dataclass(frozen=True)
class QuarticLaw:
    """Density ``C exp(-a s^4)`` on the real line."""

    a: float = 1.0 / 12.0

    @property
    def norm_const(self):
        return 2.0 * self.a ** 0.25 / gamma(0.25)

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        return self.norm_const * np.exp(-self.a * s ** 4)

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 + 0.5 * np.sign(s) * gammainc(0.25, self.a * s ** 4)

    def moment(self, k):
        if k % 2:
            return 0.0
        return self.a ** (-k / 4.0) * gamma((k + 1) / 4.0) / gamma(0.25)

    def quantile(self, q, tol=1e-14):
        """Inverse CDF by vectorised bisection."""
        q = np.asarray(q, dtype=float)
        if np.any((q <= 0) | (q >= 1)):
            raise ValueError("quantile levels must lie in (0, 1)")
        hi_b = (60.0 / self.a) ** 0.25
        lo = np.full(q.shape, -hi_b)
        hi = np.full(q.shape, hi_b)
        while np.max(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, rng, size):
        q = rng.random(size)
        q = np.where(q == 0.0, 0.5, q)
        return self.quantile(q)


def fluctuation_scale(m, n):
    """Factor mapping ``S_n`` to the normalised fluctuation."""
    return m.mu4 ** 0.25 / (m.variance * n ** 0.75)


def normalize_fluctuations(m, sn, n):
    return np.asarray(sn, dtype=float) * fluctuation_scale(m, n)


@dataclass(frozen=True)
class FluctuationReport:
    normalized_samples: np.ndarray = field(repr=False)
    n_used: int
    n_eff: float
    ks_stat: float
    ks_critical: float
    ks_pvalue: float
    m2: float
    m2_se: float
    m4: float
    m4_se: float
    sampler_tag: str = ""

    @property
    def ks_pass(self):
        return self.ks_stat < self.ks_critical

    def moment_pass(self, which, sigmas=3.0, law=QuarticLaw()):
        if which == 2:
            return abs(self.m2 - law.moment(2)) <= sigmas * self.m2_se
        return abs(self.m4 - law.moment(4)) <= sigmas * self.m4_se


def theorem2_test(normalized, law=QuarticLaw(), n_eff=None, alpha=0.01, sampler_tag=""):
    """KS test and moment checks of normalised fluctuations against the quartic law.

    ``n_eff`` replaces the sample size in the critical value and inflates
    the jackknife errors when the draws are autocorrelated.
    """
    x = np.asarray(normalized, dtype=float).ravel()
    n = x.size
    n_eff = float(n if n_eff is None else min(n_eff, n))
    infl = math.sqrt(n / n_eff)
    d = ks_statistic(x, law.cdf)
    (m2, m4), se = jackknife(lambda y: np.array([np.mean(y ** 2), np.mean(y ** 4)]), x)
    return FluctuationReport(
        normalized_samples=x, n_used=n, n_eff=n_eff, ks_stat=d, ks_critical=ks_critical(n_eff, alpha),
        ks_pvalue=ks_pvalue(d, n_eff), m2=float(m2), m2_se=float(se[0] * infl),
        m4=float(m4), m4_se=float(se[1] * infl), sampler_tag=sampler_tag,
    )


def exact_ks_distance(m, values, probs, n, law=QuarticLaw()):
    """KS distance between an exact lattice law of ``S_n`` and the limit law."""
    return ks_discrete(normalize_fluctuations(m, values, n), probs, law.cdf)


def lattice_tv_distance(m, values, probs, n, law=QuarticLaw()):
    """Total variation between a lattice law and the limit law binned on the lattice cells."""
    s = normalize_fluctuations(m, values, n)
    order = np.argsort(s)
    s = s[order]
    p = np.asarray(probs, dtype=float)[order]
    mid = 0.5 * (s[1:] + s[:-1])
    edges = np.concatenate([[-np.inf], mid, [np.inf]])
    q = np.diff(law.cdf(edges))
    return float(0.5 * np.sum(np.abs(p - q)))


# ------------------------------------------------------------ concentration

@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    component: str
    tol: float
    prob: float
    stderr: float
    n_samples: int


def theorem1_test(m, x, y, tol, n=0, component="norm", n_eff=None):
    """Estimate ``P(|(S_n/n, T_n/n) - (0, sigma^2)| > tol)`` from samples ``x = S_n/n``, ``y = T_n/n``.

    ``component`` selects the Euclidean norm or the ``s``/``t`` coordinate.
    The binomial error uses ``n_eff`` when given.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel() - m.variance
    if component == "norm":
        dev = np.hypot(x, y)
    elif component == "s":
        dev = np.abs(x)
    elif component == "t":
        dev = np.abs(y)
    else:
        raise ValueError("component must be 'norm', 's' or 't'")
    k = dev.size
    p = float(np.mean(dev > tol))
    ne = float(k if n_eff is None else min(n_eff, k))
    return ConcentrationReport(n, component, tol, p, math.sqrt(max(p * (1 - p), 1.0 / k) / ne), k)


def is_nonincreasing(reports, sigmas=2.0):
    """Whether exceedance probabilities decrease along a ladder of ``n`` within noise."""
    rs = sorted(reports, key=lambda r: r.n)
    return all(b.prob <= a.prob + sigmas * math.hypot(a.stderr, b.stderr)
               for a, b in zip(rs, rs[1:]))


# ----------------------------------------------------------- pair density

def pair_density_f2(m, x, y):
    """Density of ``(Z1 + Z2, Z1^2 + Z2^2)`` for i.i.d. ``Z`` with density ``f``.

    Vanishes outside ``2y > x^2``.
    """
    if not m.has_density or m.atoms.size:
        raise ValueError("pair density needs an absolutely continuous measure")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = 2.0 * y - x * x
    out = np.zeros(np.broadcast(x, y).shape)
    ok = np.broadcast_to(d > 0, out.shape)
    r = np.sqrt(np.where(d > 0, d, 1.0))
    val = m.pdf((x + r) / 2) * m.pdf((x - r) / 2) / r
    out[ok] = np.broadcast_to(val, out.shape)[ok]
    return out


def pair_density_norm(m, p=1.0, rtol=1e-10):
    """``int int f2(x, y)^p dx dy`` for ``1 <= p < 2``.

    With ``2y - x^2 = q^k``, ``k = 2/(2-p)``, the inverse square-root
    singularity on the parabola cancels against the Jacobian.  The outer
    variable is ``x = 2a - h^2`` on the half line (the integrand is even in
    ``x``), which smooths the root behaviour at the support edge.
    """
    if not 1.0 <= p < 2.0:
        raise ValueError("p must lie in [1, 2)")
    k = 2.0 / (2.0 - p)
    a = m.support if math.isfinite(m.support) else m.scan_radius
    fp = lambda z: np.exp(p * m.cont_logpdf(z))

    def inner(x):
        top = (2 * a - abs(x)) ** (2.0 / k)
        if top <= 0:
            return 0.0

        def g(q):
            r = q ** (k / 2)
            return 0.5 * k * fp((x + r) / 2) * fp((x - r) / 2)

        return quad.integrate(g, 0.0, top, rtol=rtol)[0]

    def outer(hs):
        return np.array([4.0 * h * inner(2 * a - h * h) for h in np.atleast_1d(hs)])

    val, _ = quad.integrate(outer, 0.0, math.sqrt(2 * a), rtol=rtol, panels=4)
    return float(val)


def local_clt_density(m, n, x, y):
    """Local large-deviation approximation to the density of ``(S_n/n, T_n/n)``.

    ``n/(2 pi) sqrt(det D^2 I(x, y)) exp(-n I(x, y))``.
    """
    if violated_constraint(m, x, y) is not None:
        return 0.0
    cv = solve_dual(m, x, y)
    det = 1.0 / np.linalg.det(cv.hessian)
    return float(n / (2 * math.pi) * math.sqrt(det) * math.exp(-n * cv.value))
