"""Composite Gauss-Legendre quadrature with panel doubling.

Two entry points:

* :func:`integrate` -- plain adaptive integral of a vectorised callable over an
  interval, with optional breakpoints where the integrand is not smooth.
* :func:`tilted_log_sums` -- the log-partition and normalised moments of a
  measure (continuous part + atoms) tilted by ``exp(u z + v z^2)``.  Everything
  is computed in log space with a max shift, the active range of the
  continuous part is located by scanning the log-integrand.
"""

from functools import lru_cache

import numpy as np

# integrand values below exp(-CUT) times the peak are dropped
CUT = 60.0
ORDER = 16
SCAN_POINTS = 1025
MAX_PANELS = 2**12


@lru_cache(maxsize=None)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(a, b, panels, order=ORDER):
    """Nodes and weights of a composite rule with ``panels`` equal panels."""
    x, w = _leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _split(a, b, breakpoints):
    pts = [a] + sorted(p for p in breakpoints if a < p < b) + [b]
    return list(zip(pts[:-1], pts[1:]))


def integrate(func, a, b, rtol=1e-12, atol=0.0, breakpoints=(), panels=2,
              max_panels=MAX_PANELS):
    """Integrate ``func`` on ``[a, b]`` by doubling panels until two
    successive estimates agree.

    Returns ``(value, converged)``.  ``func`` must accept a 1-d array.
    """
    total = 0.0
    converged = True
    for lo, hi in _split(a, b, breakpoints):
        p = panels
        z, w = composite_nodes(lo, hi, p)
        prev = float(np.dot(w, func(z)))
        ok = False
        while p < max_panels:
            p *= 2
            z, w = composite_nodes(lo, hi, p)
            cur = float(np.dot(w, func(z)))
            if abs(cur - prev) <= max(rtol * abs(cur), atol):
                ok = True
                prev = cur
                break
            prev = cur
        total += prev
        converged &= ok
    return total, converged


def active_interval(logf, lo, hi, radius, cut=CUT, zooms=2, max_expand=64):
    """Locate the interval where ``logf`` is within ``cut`` of its maximum.

    ``[lo, hi]`` is the support (possibly infinite); the scan starts on
    ``[-radius, radius]`` clipped to the support and grows while the
    end values are still significant.
    """
    a = max(lo, -radius)
    b = min(hi, radius)
    for _ in range(max_expand):
        z = np.linspace(a, b, SCAN_POINTS)
        g = logf(z)
        gmax = np.max(g)
        if not np.isfinite(gmax):
            raise FloatingPointError("log-integrand has no finite value on the scan range")
        grow_left = a > lo and g[0] > gmax - cut
        grow_right = b < hi and g[-1] > gmax - cut
        if not (grow_left or grow_right):
            break
        width = b - a
        if grow_left:
            a = max(lo, a - width)
        if grow_right:
            b = min(hi, b + width)
    else:
        raise FloatingPointError("integrand tails do not decay; tilt outside the domain?")
    for _ in range(zooms + 1):
        keep = np.nonzero(g > gmax - cut)[0]
        i0 = max(keep[0] - 1, 0)
        i1 = min(keep[-1] + 1, z.size - 1)
        a, b = z[i0], z[i1]
        if i1 - i0 > SCAN_POINTS // 4:
            break
        z = np.linspace(a, b, SCAN_POINTS)
        g = logf(z)
        gmax = max(gmax, np.max(g))
    return a, b


def _powers(z, jmax):
    out = np.empty((jmax + 1, z.size))
    out[0] = 1.0
    for j in range(1, jmax + 1):
        out[j] = out[j - 1] * z
    return out


def tilted_log_sums(u, v, jmax, *, logpdf=None, support=np.inf, radius=10.0,
                    cont_logmass=0.0, atoms=None, log_atom_weights=None,
                    rtol=1e-13):
    """Log-partition ``ln E[exp(uZ + vZ^2)]`` and the tilted moments
    ``E[Z^j exp(...)] / E[exp(...)]`` for ``j = 0..jmax``.

    The measure is ``exp(cont_logmass) * exp(logpdf(z)) dz`` on
    ``[-support, support]`` plus point masses ``exp(log_atom_weights)`` at
    ``atoms``.  Returns ``(log_z, moments, converged)``.
    """
    parts_z = []
    parts_g = []
    if atoms is not None and len(atoms):
        za = np.asarray(atoms, dtype=float)
        parts_z.append(za)
        parts_g.append(np.asarray(log_atom_weights) + u * za + v * za * za)

    if logpdf is None:
        z = np.concatenate(parts_z)
        g = np.concatenate(parts_g)
        return _reduce(z, g, jmax) + (True,)

    def logf(z):
        with np.errstate(divide="ignore"):
            return logpdf(z) + u * z + v * z * z

    a, b = active_interval(logf, -support, support, radius)
    panels = 4
    prev = None
    converged = False
    while panels <= MAX_PANELS:
        zc, wc = composite_nodes(a, b, panels)
        with np.errstate(divide="ignore"):
            gc = cont_logmass + np.log(wc) + logf(zc)
        z = np.concatenate(parts_z + [zc])
        g = np.concatenate(parts_g + [gc])
        cur = _reduce(z, g, jmax)
        if prev is not None and _close(prev, cur, rtol):
            converged = True
            break
        prev = cur
        panels *= 2
    return cur + (converged,)


def _reduce(z, g, jmax):
    shift = np.max(g)
    p = np.exp(g - shift)
    zsum = p.sum()
    moments = _powers(z, jmax) @ p / zsum
    return shift + np.log(zsum), moments


def _close(prev, cur, rtol):
    lz0, m0 = prev
    lz1, m1 = cur
    if abs(lz1 - lz0) > rtol * max(1.0, abs(lz1)):
        return False
    scale = np.sqrt(max(m1[2] - m1[1] ** 2, 0.0)) if m1.size > 2 else 1.0
    scale = max(scale, abs(m1[1]) if m1.size > 1 else 0.0, 1e-300)
    ref = np.maximum(np.abs(m1), scale ** np.arange(m1.size))
    return bool(np.all(np.abs(m1 - m0) <= rtol * 10 * ref))
