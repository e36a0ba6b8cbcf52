"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from cwsoc import cramer as cr
from cwsoc import fluctuations as fl
from cwsoc.measures import bernoulli, condition_c_integral, gaussian, uniform
from cwsoc.sampler import (
    exact_bernoulli_sn, exact_gaussian_sample, exact_gaussian_st, importance_zn,
    mcmc_sample, zn_asymptotic,
)
from cwsoc.stats import chi_square_gof, ks_critical, ks_two_sample

G = gaussian(1.0)
U = uniform(1.0)
B = bernoulli(1.0)
LAW = fl.QuarticLaw()


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print("\n%s criterion %d: %s" % ("PASS" if ok else "FAIL", number, detail))
        assert ok, detail
    return emit


def test_01_closed_form_oracles(report):
    pts = cr.hull_grid(G, 20, 20)
    g_err = max(abs(cr.cramer_transform(G, x, y) - cr.gaussian_rate_oracle(1.0, x, y))
                for x, y in pts)
    xs = np.linspace(-0.98, 0.98, 50)
    b_err = max(abs(cr.cramer_transform(B, x, 1.0) - cr.bernoulli_rate_oracle(1.0, x))
                for x in xs)
    ok = len(pts) >= 400 and g_err <= 1e-8 and b_err <= 1e-8
    report(1, ok, "gaussian %d pts max err %.2e, bernoulli 50 pts max err %.2e"
           % (len(pts), g_err, b_err))


def test_02_duality_identities(report):
    h = 1e-5
    worst_grad = worst_hess = 0.0
    for m in (G, U):
        s2 = m.variance
        for x, y in [(0.1, 1.05 * s2), (-0.2, 0.9 * s2), (0.3, 1.3 * s2)]:
            cv = cr.solve_dual(m, x, y)
            gx = (cr.solve_dual(m, x + h, y).value - cr.solve_dual(m, x - h, y).value) / (2 * h)
            gy = (cr.solve_dual(m, x, y + h).value - cr.solve_dual(m, x, y - h).value) / (2 * h)
            for fd, exact in zip((gx, gy), cv.maximizer):
                worst_grad = max(worst_grad, abs(fd - exact) / abs(exact))
        ref = np.diag([1 / s2, 1 / (m.mu4 - s2 * s2)])
        hess = cr.rate_hessian(m, 0.0, s2)
        worst_hess = max(worst_hess, np.max(np.abs(hess - ref)) / np.max(np.abs(ref)))
    ok = worst_grad <= 1e-5 and worst_hess <= 1e-6
    report(2, ok, "grad rel err %.2e, hessian rel err %.2e" % (worst_grad, worst_hess))


def test_03_key_inequality(report):
    parts, ok = [], True
    for m in (G, U, B):
        pts = cr.hull_grid(m, 100, 100)
        rep = cr.check_key_inequality(m, pts, gap_tol=1e-9, loc_tol=1e-3)
        ok &= rep.passed and rep.localized and rep.min_gap >= -1e-9 and len(pts) >= 10**4
        parts.append("%s %d pts min gap %.1e localized=%s"
                     % (m.kind, len(pts), rep.min_gap, rep.localized))
    report(3, ok, "; ".join(parts))


def test_04_expansion_coefficients(report):
    parts, ok = [], True
    for m in (G, U):
        s2, mu4 = m.variance, m.mu4
        co = cr.expansion_coefficients(m)
        a02, a40 = cr.predicted_coefficients(m)
        scale = max(co.a02, co.a40)
        de = cr.derivative_identities(m)
        e02 = abs(co.a02 / a02 - 1)
        e40 = abs(co.a40 / a40 - 1)
        e3 = abs(de.d2x_dy / (-1 / s2 ** 2) - 1)
        e4 = abs(de.d4x / (2 * mu4 / s2 ** 4) - 1)
        ok &= (e02 <= 0.02 and e40 <= 0.02 and abs(co.a21) < 1e-3 * scale
               and abs(co.a30) < 1e-3 * scale and e3 <= 0.02 and e4 <= 0.05)
        parts.append("%s a02 %.6g a40 %.6g |a21| %.1e |a30| %.1e d3 err %.1e d4 err %.1e"
                     % (m.kind, co.a02, co.a40, abs(co.a21), abs(co.a30), e3, e4))
    assert cr.predicted_coefficients(U)[1] == pytest.approx(1.35)
    report(4, ok, "; ".join(parts))


def test_05_bernoulli_exact_fluctuations(report):
    ks = []
    for n in (100, 1000, 10000):
        v, p = exact_bernoulli_sn(1.0, n)
        ks.append(fl.exact_ks_distance(B, v, p, n))
    ok = ks[0] > ks[1] > ks[2] and ks[2] <= 0.05
    report(5, ok, "KS %s" % ", ".join("%.3g" % k for k in ks))


def test_06_gaussian_exact_fluctuations(report):
    n = 10**4
    s = exact_gaussian_sample(1.0, n, 10**5, seed=6)
    rep = fl.theorem2_test(fl.normalize_fluctuations(G, s, n), alpha=0.01)
    ok = rep.ks_stat <= 0.05 and rep.ks_pass
    report(6, ok, "KS %.4g (critical %.4g at alpha 0.01)" % (rep.ks_stat, rep.ks_critical))


def test_07_mcmc_cross_validation(report):
    n = 1000
    res = mcmc_sample(G, n, sweeps=70000, seed=7, chains=4, workers=4)
    mc = fl.normalize_fluctuations(G, res.s.ravel(), n)
    ex = fl.normalize_fluctuations(G, exact_gaussian_sample(1.0, n, 10**5, seed=8), n)
    d = ks_two_sample(mc, ex)
    ok_g = res.ess >= 5000 and d <= 0.03

    nb = 500
    rb = mcmc_sample(B, nb, sweeps=40000, seed=9, chains=4, workers=4)
    vals, probs = exact_bernoulli_sn(1.0, nb)
    counts = np.array([np.count_nonzero(rb.s == v) for v in vals])
    assert counts.sum() == rb.s.size
    _, dof, pval = chi_square_gof(counts, probs, scale=min(1.0, rb.ess / rb.s.size))
    ok_b = pval >= 0.01
    report(7, ok_g and ok_b, "gaussian ess %.0f two-sample KS %.4g; bernoulli ess %.0f "
           "chi-square p %.3g (dof %d)" % (res.ess, d, rb.ess, pval, dof))


def test_08_concentration_trend(report):
    probs = []
    for n in (200, 1000, 5000):
        s, t = exact_gaussian_st(1.0, n, 10**5, seed=n)
        probs.append(fl.theorem1_test(G, s / n, t / n, 0.1, n=n, component="t").prob)
    ok = probs[0] > probs[1] >= probs[2] and (probs[1] > probs[2] or probs[2] == 0) \
        and probs[2] <= 0.01
    report(8, ok, "P(|T_n/n - 1| > 0.1) = %s" % ", ".join("%.4g" % p for p in probs))


def test_09_quartic_law(report):
    from scipy import integrate
    total, _ = integrate.quad(LAW.pdf, -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    x = LAW.sample(np.random.default_rng(9), 10**6)
    m2, m4 = float(np.mean(x ** 2)), float(np.mean(x ** 4))
    ok = abs(total - 1) <= 1e-10 and abs(m4 - 3) <= 0.05 and abs(m2 - 1.1708) <= 0.01
    report(9, ok, "integral - 1 = %.1e, m2 %.5f, m4 %.5f" % (total - 1, m2, m4))


def test_10_partition_function(report):
    ladder = (16, 32, 64, 128, 256)
    ests = [importance_zn(G, n, 10**6, seed=n) for n in ladder]
    c = zn_asymptotic(G, 1)
    bounded = all(1 <= e.estimate <= math.exp(n / 2) for n, e in zip(ladder, ests))
    near = True
    ratios = []
    for n, e in zip(ladder[-2:], ests[-2:]):
        r, se = e.estimate / n ** 0.25 / c, e.stderr / n ** 0.25 / c
        ratios.append("%d: %.5f +- %.5f" % (n, r, se))
        near &= abs(r - 1) <= 0.1 and r - 3 * se <= 1.1 and r + 3 * se >= 0.9
    report(10, bounded and near, "bounds ok=%s; Z_n/(C n^(1/4)) %s" % (bounded, ", ".join(ratios)))


def test_11_pair_density(report):
    parts, ok = [], True
    for m in (G, U):
        norm1 = fl.pair_density_norm(m, 1.0)
        a = fl.pair_density_norm(m, 1.5)
        b = condition_c_integral(m, 1.5).value
        ok &= abs(norm1 - 1) <= 1e-6 and abs(a / b - 1) <= 1e-4
        parts.append("%s integral %.10f, p=3/2 rel diff %.1e" % (m.kind, norm1, abs(a / b - 1)))
    report(11, ok, "; ".join(parts))


def _cell_average(m, n, x0, y0, h, order=8):
    z, w = leggauss(order)
    xs, ys = x0 + h / 2 * z, y0 + h / 2 * z
    vals = np.array([[fl.local_clt_density(m, n, x, y) for y in ys] for x in xs])
    return float(w @ vals @ w) / 4


def test_12_local_clt(report):
    n, draws, h = 100, 10**7, 0.02
    rng = np.random.default_rng(12)
    # under rho^n with standard Gaussian rho: S/sqrt(n) ~ N(0,1), T - S^2/n ~ chi2(n-1), independent
    z = rng.standard_normal(draws)
    x = z / math.sqrt(n)
    y = (z * z + rng.chisquare(n - 1, draws)) / n
    centres = [(0.0, 1.0), (0.1, 1.0), (0.0, 1.1), (-0.1, 0.95), (0.05, 0.9)]
    parts, ok = [], True
    for cx, cy in centres:
        hits = np.count_nonzero((np.abs(x - cx) < h / 2) & (np.abs(y - cy) < h / 2))
        empirical = hits / (draws * h * h)
        model = _cell_average(G, n, cx, cy, h)
        rel = abs(model / empirical - 1)
        ok &= hits >= 200 and rel <= 0.2
        parts.append("(%g,%g) hits %d rel %.3f" % (cx, cy, hits, rel))
    report(12, ok, "; ".join(parts))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
