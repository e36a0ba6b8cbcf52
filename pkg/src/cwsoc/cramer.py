"""Cramer transform of (Z, Z^2) by a damped Newton solve of the dual problem.

``I(x, y) = sup_{u,v} (x u + y v - Lambda(u, v))``.  On the interior of the
convex hull of ``{(z, z^2)}`` the supremum is attained at the unique
``(u, v)`` with ``grad Lambda(u, v) = (x, y)``, and ``D^2 I = (D^2 Lambda)^{-1}``
there.  Two-point laws are degenerate and reduce to a one-variable problem on
the segment ``y = c^2``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .loglaplace import DomainError, hessian_from_moments, moment_functions

TOL = 1e-12
MAX_ITER = 200
DUAL_CAP = 1e6


class AdmissibilityError(ValueError):
    """Primal point outside the open region where the dual solve is posed."""

    def __init__(self, constraint, x, y):
        super().__init__("(x, y) = (%r, %r) violates %s" % (x, y, constraint))
        self.constraint = constraint


class SolverError(RuntimeError):
    """Newton iteration did not reach the residual tolerance."""

    def __init__(self, msg, residual, iterations):
        super().__init__("%s (residual %.3e after %d iterations)" % (msg, residual, iterations))
        self.residual = residual
        self.iterations = iterations


class BoundaryProximityError(SolverError):
    """Dual variables exceeded the cap: the point is too close to the hull boundary."""


@dataclass(frozen=True)
class CramerValue:
    x: float
    y: float
    value: float
    maximizer: Optional[Tuple[float, float]]
    iterations: int
    residual: float
    hessian: Optional[np.ndarray] = None  # D^2 Lambda at the maximizer

    @property
    def rate_hessian(self):
        """``D^2 I(x, y)``, the inverse of the dual Hessian."""
        return None if self.hessian is None else np.linalg.inv(self.hessian)


@dataclass(frozen=True)
class ExpansionCoefficients:
    a02: float
    a40: float
    a21: float
    a30: float
    residual: float
    condition: float
    radius: float
    all_coefficients: dict


# ------------------------------------------------------------------ oracles

def gaussian_rate_oracle(variance, x, y):
    """Closed-form rate for the centered Gaussian; ``+inf`` when ``x^2 >= y``."""
    if x * x >= y:
        return math.inf
    return 0.5 * (y / variance - 1.0 - math.log((y - x * x) / variance))


def bernoulli_rate_oracle(c, x):
    """``phi_c(x) = sup_u (u x - ln cosh(u c))`` in closed form."""
    ax = abs(x)
    if ax > c:
        return math.inf
    if ax == c:
        return math.log(2.0)
    return ((c + ax) * math.log(c + ax) + (c - ax) * math.log(c - ax)) / (2 * c) - math.log(c)


def rate_at_origin(m):
    """``I(0, 0) = -ln rho({0})``."""
    return math.inf if m.atom_at_zero <= 0 else -math.log(m.atom_at_zero)


# ------------------------------------------------------------- admissibility

def _support_points(m):
    """Sorted finite support pieces as (lo, hi) intervals; atoms are degenerate intervals."""
    pieces = [(z, z) for z, w in zip(m.atoms, m.atom_weights) if w > 0]
    if m.cont_mass > 0:
        pieces.append((-m.support, m.support))
    return sorted(pieces)


def hull_lower(m, x):
    """Lower boundary of the convex hull of ``{(z, z^2) : z in supp rho}`` at ``x``."""
    pieces = _support_points(m)
    left = right = None
    for lo, hi in pieces:
        if lo <= x <= hi:
            return x * x
        if hi < x:
            left = hi if left is None else max(left, hi)
        elif lo > x:
            right = lo if right is None else min(right, lo)
    if left is None or right is None:
        return math.inf
    return (left + right) * x - left * right


def violated_constraint(m, x, y):
    """Name of the first violated interior constraint, or ``None`` if admissible."""
    if m.is_degenerate:
        return "degenerate two-point law: only the segment y = c^2 is reachable"
    _, l2 = m.support_sq_bounds
    if not x * x < y:
        return "x^2 < y"
    if not abs(x) < math.sqrt(l2):
        return "|x| < sup|z| over the support"
    if not y < l2:
        return "y < sup z^2 over the support"
    if not y > hull_lower(m, x):
        return "y above the lower hull of the support"
    return None


# -------------------------------------------------------------------- solver

def _eval(m, u, v):
    lam, f, _ = moment_functions(m, u, v, 4)
    return lam, f


def solve_dual(m, x, y, tol=TOL, max_iter=MAX_ITER, start=(0.0, 0.0)):
    """Maximise ``x u + y v - Lambda(u, v)`` by damped Newton from ``start``.

    Steps are halved until they stay inside ``v < v0`` and either the dual
    objective or the gradient residual decreases.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if m.is_degenerate:
        return _solve_segment(m, x, y, tol, max_iter)
    bad = violated_constraint(m, x, y)
    if bad is not None:
        raise AdmissibilityError(bad, x, y)

    target = np.array([x, y], dtype=float)
    w = np.array(start, dtype=float)
    lam, f = _eval(m, *w)
    g = f[1:3] - target
    phi = lam - w @ target
    res = float(np.hypot(*g))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SolverError("dual Newton did not converge", res, it)
        it += 1
        h = hessian_from_moments(f)
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            raise SolverError("singular dual Hessian", res, it) from None
        t = 1.0
        slope = g @ step
        for _ in range(80):
            cand = w + t * step
            if cand[1] < m.v0:
                try:
                    lam_c, f_c = _eval(m, *cand)
                except (DomainError, FloatingPointError):
                    lam_c = math.inf
                if math.isfinite(lam_c):
                    g_c = f_c[1:3] - target
                    phi_c = lam_c - cand @ target
                    res_c = float(np.hypot(*g_c))
                    if phi_c <= phi + 1e-4 * t * slope or res_c < res:
                        break
            t *= 0.5
        else:
            raise SolverError("line search failed", res, it)
        w, lam, f, g, phi, res = cand, lam_c, f_c, g_c, phi_c, res_c
        if np.max(np.abs(w)) > DUAL_CAP:
            raise BoundaryProximityError("dual variables exceed %g near the hull boundary"
                                         % DUAL_CAP, res, it)
    value = float(w @ target - lam)
    return CramerValue(float(x), float(y), max(value, 0.0) if value > -1e-14 else value,
                       (float(w[0]), float(w[1])), it, res, hessian_from_moments(f))


def _solve_segment(m, x, y, tol, max_iter):
    """Two-point law: ``I(x, c^2) = sup_u (u x - Lambda(u, 0))``."""
    c2 = m.variance
    c = math.sqrt(c2)
    if not math.isclose(y, c2, rel_tol=1e-14, abs_tol=1e-14):
        raise AdmissibilityError("y = c^2 (two-point law)", x, y)
    if not abs(x) < c:
        raise AdmissibilityError("|x| < c (two-point law)", x, y)
    u = 0.0
    lam, f = _eval(m, u, 0.0)
    res = abs(f[1] - x)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SolverError("segment Newton did not converge", res, it)
        it += 1
        step = -(f[1] - x) / (f[2] - f[1] ** 2)
        t = 1.0
        for _ in range(80):
            lam_c, f_c = _eval(m, u + t * step, 0.0)
            if abs(f_c[1] - x) < res or (lam_c - (u + t * step) * x) <= lam - u * x:
                break
            t *= 0.5
        u += t * step
        lam, f = lam_c, f_c
        res = abs(f[1] - x)
        if abs(u) > DUAL_CAP:
            raise BoundaryProximityError("dual variable exceeds cap near |x| = c", res, it)
    value = u * x - lam
    return CramerValue(float(x), float(y), max(value, 0.0), (u, 0.0), it, res, None)


def cramer_transform(m, x, y):
    """``I(x, y)`` on the whole plane.

    Interior points use :func:`solve_dual`; points outside the closed hull
    return ``+inf``; hull boundary points use a closed form where one exists
    (Gaussian, two-point, the origin) and raise otherwise.
    """
    if m.is_degenerate:
        c2 = m.variance
        if not math.isclose(y, c2, rel_tol=1e-14, abs_tol=1e-14):
            return math.inf
        c = math.sqrt(c2)
        if abs(x) >= c:
            return bernoulli_rate_oracle(c, x)
        return solve_dual(m, x, y).value
    bad = violated_constraint(m, x, y)
    if bad is None:
        return solve_dual(m, x, y).value
    if x == 0 and y == 0:
        return rate_at_origin(m)
    _, l2 = m.support_sq_bounds
    if x * x > y or y > l2 or y < hull_lower(m, x):
        return math.inf
    if m.kind == "gaussian":
        return gaussian_rate_oracle(m.variance, x, y)
    raise AdmissibilityError("closure point without a closed form: " + bad, x, y)


def rate_gap(m, x, y):
    """``I(x, y) - x^2/(2y)`` on ``{x^2 <= y} minus the origin``."""
    if not (x * x <= y and (x, y) != (0.0, 0.0)):
        raise AdmissibilityError("(x, y) in Delta* (x^2 <= y, not the origin)", x, y)
    val = cramer_transform(m, x, y)
    return val - x * x / (2 * y)


# --------------------------------------------------------- structural checks

@dataclass(frozen=True)
class InequalityReport:
    min_gap: float
    argmin: Tuple[float, float]
    violations: list
    failures: list
    near_zero: list
    localized: bool
    points: int
    gaps: list = field(default_factory=list, repr=False)  # (x, y, gap), nan on failure

    @property
    def passed(self):
        return not self.violations and not self.failures and self.localized


def check_key_inequality(m, points, gap_tol=1e-9, zero_tol=1e-14, loc_tol=1e-3):
    """Check ``I - F >= 0`` on ``points`` and that near-zero gaps sit at ``(0, sigma^2)``.

    The gap grows only quartically in ``x`` near its zero, so ``zero_tol``
    sits at rounding level; a looser threshold would admit a band of
    half-width about ``(12 zero_tol)^{1/4}``.  Violations and solver
    failures are collected, never raised.
    """
    gaps = []
    violations, failures, near = [], [], []
    best = (math.inf, (math.nan, math.nan))
    for x, y in points:
        try:
            gap = rate_gap(m, x, y)
        except (SolverError, AdmissibilityError, DomainError) as exc:
            failures.append(((x, y), str(exc)))
            gaps.append((x, y, math.nan))
            continue
        gaps.append((x, y, gap))
        if gap < -gap_tol:
            violations.append(((x, y), gap))
        if gap <= zero_tol:
            near.append((x, y))
        if gap < best[0]:
            best = (gap, (x, y))
    s2 = m.variance
    localized = bool(near) and all(math.hypot(x, y - s2) <= loc_tol for x, y in near)
    return InequalityReport(best[0], best[1], violations, failures, near, localized, len(points), gaps)


def hull_grid(m, nx=100, ny=100, x_max=None, y_max=None, margin=0.01):
    """Grid of admissible points ``(x, y)`` spanning the hull interior.

    ``x`` runs over ``nx`` values of ``[-x_max, x_max]``; for each, ``y``
    takes ``ny`` values strictly between the lower hull and ``y_max``
    (or the support bound), shrunk by ``margin`` at both ends.  The point
    ``(0, sigma^2)`` is appended.
    """
    s2 = m.variance
    if m.is_degenerate:
        c = math.sqrt(s2)
        xs = np.linspace(-c, c, nx * ny)
        return [(float(x), s2) for x in xs] + [(0.0, s2)]
    _, l2 = m.support_sq_bounds
    if y_max is None:
        y_max = l2 if math.isfinite(l2) else 3 * s2
    y_max = min(y_max, l2)
    if x_max is None:
        x_max = 0.95 * math.sqrt(y_max)
    pts = []
    for x in np.linspace(-x_max, x_max, nx):
        lo = hull_lower(m, x)
        if not lo < y_max:
            continue
        for t in np.linspace(margin, 1 - margin, ny):
            pts.append((float(x), float(lo + t * (y_max - lo))))
    pts.append((0.0, s2))
    return pts


_MONOMIALS = [(0, 2), (4, 0), (2, 1), (3, 0), (2, 2), (1, 2), (0, 3), (3, 1), (1, 3), (0, 4)]


def expansion_coefficients(m, radius=0.02, points_per_axis=13, nuisance_order=6):
    """Least-squares fit of ``G(x, sigma^2 + h)`` by low-order monomials.

    The fitted model contains ``h^2, x^4, x^2 h, x^3`` and the remaining
    quartic monomials; monomials of degree 5 up to ``nuisance_order`` are
    included as nuisance terms so that they do not leak into the reported
    coefficients.
    """
    if m.is_degenerate or not m.mu4 > m.variance ** 2:
        raise ValueError("expansion needs a nondegenerate measure (mu4 > sigma^4)")
    s2 = m.variance
    r = radius * math.sqrt(s2)
    grid = np.linspace(-r, r, points_per_axis)
    monos = list(_MONOMIALS)
    for deg in range(5, nuisance_order + 1):
        monos += [(i, deg - i) for i in range(deg + 1)]
    rows, vals = [], []
    for x in grid:
        for h in grid:
            rows.append([(x / r) ** i * (h / r) ** j for i, j in monos])
            vals.append(rate_gap(m, float(x), float(s2 + h)))
    a = np.array(rows)
    b = np.array(vals)
    cond = float(np.linalg.cond(a))
    if cond > 1e10:
        raise ValueError("ill-conditioned expansion fit (condition number %.3g)" % cond)
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = float(np.sqrt(np.mean((a @ coef - b) ** 2)))
    scaled = {mono: float(cf / r ** sum(mono)) for mono, cf in zip(monos, coef)}
    return ExpansionCoefficients(
        a02=scaled[(0, 2)], a40=scaled[(4, 0)], a21=scaled[(2, 1)], a30=scaled[(3, 0)],
        residual=resid, condition=cond, radius=r, all_coefficients=scaled,
    )


def predicted_coefficients(m):
    """``(a02, a40)`` predicted from the moments."""
    s2 = m.variance
    return 1.0 / (2 * (m.mu4 - s2 * s2)), m.mu4 / (12 * s2 ** 4)


@dataclass(frozen=True)
class DerivativeReport:
    d4x: float
    d2x_dy: float
    grad: Tuple[float, float]
    hessian_dual: np.ndarray
    hessian_fd: np.ndarray
    expected_d4x: float
    expected_d2x_dy: float
    expected_hessian: np.ndarray
    step_failure: bool
    spread: dict


def _richardson(values):
    """Extrapolate an O(h^2) sequence at h, h/2, h/4; return best estimate and spread."""
    e1 = (4 * values[1] - values[0]) / 3
    e2 = (4 * values[2] - values[1]) / 3
    best = (16 * e2 - e1) / 15
    return best, abs(e2 - e1)


def derivative_identities(m, steps=(1e-2, 5e-3, 2.5e-3), agree_rtol=1e-2):
    """Finite-difference derivatives of ``I`` at ``(0, sigma^2)``.

    Returns ``d^4 I/dx^4``, ``d^3 I/dx^2 dy``, the gradient, and the
    Hessian both from the dual solve and from differences, each with the
    value predicted from the moments.
    """
    if m.is_degenerate:
        raise ValueError("derivative identities need a nondegenerate measure")
    s2 = m.variance
    s = math.sqrt(s2)
    cache = {}

    def I(x, y):
        key = (x, y)
        if key not in cache:
            cache[key] = solve_dual(m, x, y).value
        return cache[key]

    y0 = s2
    d4, dxxy, gx, gy, hxx, hyy, hxy = [], [], [], [], [], [], []
    for step in steps:
        h = step * s
        i0 = I(0.0, y0)
        ip1, im1 = I(h, y0), I(-h, y0)
        ip2, im2 = I(2 * h, y0), I(-2 * h, y0)
        d4.append((ip2 - 4 * ip1 + 6 * i0 - 4 * im1 + im2) / h ** 4)
        up = I(h, y0 + h) - 2 * I(0.0, y0 + h) + I(-h, y0 + h)
        dn = I(h, y0 - h) - 2 * I(0.0, y0 - h) + I(-h, y0 - h)
        dxxy.append((up - dn) / (2 * h ** 3))
        gx.append((ip1 - im1) / (2 * h))
        gy.append((I(0.0, y0 + h) - I(0.0, y0 - h)) / (2 * h))
        hxx.append((ip1 - 2 * i0 + im1) / h ** 2)
        hyy.append((I(0.0, y0 + h) - 2 * i0 + I(0.0, y0 - h)) / h ** 2)
        hxy.append((I(h, y0 + h) - I(h, y0 - h) - I(-h, y0 + h) + I(-h, y0 - h)) / (4 * h * h))
    out = {}
    spread = {}
    for name, seq in [("d4", d4), ("dxxy", dxxy), ("gx", gx), ("gy", gy),
                      ("hxx", hxx), ("hyy", hyy), ("hxy", hxy)]:
        out[name], spread[name] = _richardson(seq)
    failure = any(spread[k] > agree_rtol * max(abs(out[k]), 1.0) for k in ("d4", "dxxy"))
    at_min = solve_dual(m, 0.0, y0)
    return DerivativeReport(
        d4x=out["d4"], d2x_dy=out["dxxy"], grad=(out["gx"], out["gy"]),
        hessian_dual=at_min.rate_hessian,
        hessian_fd=np.array([[out["hxx"], out["hxy"]], [out["hxy"], out["hyy"]]]),
        expected_d4x=2 * m.mu4 / s2 ** 4, expected_d2x_dy=-1 / s2 ** 2,
        expected_hessian=np.diag([1 / s2, 1 / (m.mu4 - s2 ** 2)]),
        step_failure=failure, spread=spread,
    )


def rate_hessian(m, x, y):
    """``D^2 I(x, y)`` through the inverse of the dual Hessian."""
    return solve_dual(m, x, y).rate_hessian
