import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwsoc import _quadrature as quad
from cwsoc.measures import (
    INV_SQRT_E, MeasureError, bernoulli, condition_c_integral, discrete, gaussian,
    make_measure, register_density, sample_iid, symmetric_density, theorem1_conditions,
    uniform, zero_atom_mixture,
)


def quad_moment(m, k):
    a = m.support if np.isfinite(m.support) else m.scan_radius
    val, ok = quad.integrate(lambda z: z ** k * m.pdf(z), -a, a, rtol=1e-13, breakpoints=[0.0])
    assert ok
    return val


@pytest.mark.parametrize("m, moments", [
    (gaussian(1.0), (1.0, 3.0, 15.0)),
    (gaussian(2.5), (2.5, 3 * 2.5 ** 2, 15 * 2.5 ** 3)),
    (bernoulli(1.0), (1.0, 1.0, 1.0)),
    (uniform(1.0), (1 / 3, 1 / 5, 1 / 7)),
])
def test_builtin_moments(m, moments):
    assert (m.variance, m.mu4, m.mu6) == pytest.approx(moments, rel=1e-15)


@pytest.mark.parametrize("m", [gaussian(1.0), gaussian(0.3), uniform(1.0), uniform(2.0)])
def test_quadrature_reproduces_moments(m):
    for k, ref in [(2, m.variance), (4, m.mu4), (6, m.mu6)]:
        assert quad_moment(m, k) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("m", [gaussian(1.0), uniform(1.0)])
def test_density_symmetric_exactly(m):
    z = np.linspace(-3, 3, 1000)
    assert np.max(np.abs(m.pdf(z) - m.pdf(-z))) == 0.0


def test_cauchy_schwarz_gap():
    assert gaussian(1.0).mu4 - gaussian(1.0).variance ** 2 > 0
    assert uniform(1.0).mu4 - uniform(1.0).variance ** 2 > 0
    b = bernoulli(1.7)
    assert b.mu4 - b.variance ** 2 == 0.0


def test_make_measure_kinds():
    assert make_measure({"kind": "gaussian", "variance": "2"}).variance == 2.0
    assert make_measure({"kind": "bernoulli", "c": 3}).variance == 9.0
    assert make_measure({"kind": "uniform", "a": 1}).mu4 == pytest.approx(0.2)
    d = make_measure({"kind": "discrete", "positions": "-1, 0, 1", "weights": "0.25, 0.5, 0.25"})
    assert d.atom_at_zero == 0.5
    mix = make_measure({"kind": "gaussian", "atom0": "0.2"})
    assert mix.atom_at_zero == pytest.approx(0.2)
    assert mix.variance == pytest.approx(0.8)


@pytest.mark.parametrize("spec", [
    {"kind": "gaussian", "variance": 0},
    {"kind": "bernoulli", "c": -1},
    {"kind": "uniform", "a": 0},
    {"kind": "discrete", "positions": "0", "weights": "1"},
    {"kind": "discrete", "positions": "-1, 2", "weights": "0.5, 0.5"},
    {"kind": "nope"},
    {"kind": "gaussian", "v0": 0.9},
])
def test_make_measure_rejects(spec):
    with pytest.raises(MeasureError):
        make_measure(spec)


def test_asymmetric_density_rejected():
    with pytest.raises(MeasureError, match="symmetric"):
        symmetric_density(lambda z: np.exp(-(z - 0.3) ** 2 / 2) / math.sqrt(2 * math.pi), v0=0.2)


def test_user_density_normalised_and_symmetrised():
    # unnormalised Laplace-like bump with Gaussian tails
    m = symmetric_density(lambda z: 3.0 * np.exp(-z ** 2 / 2), v0=0.25)
    assert m.variance == pytest.approx(1.0, rel=1e-10)
    assert m.mu4 == pytest.approx(3.0, rel=1e-10)
    z = np.linspace(-4, 4, 1000)
    assert np.max(np.abs(m.pdf(z) - m.pdf(-z))) <= 1e-12
    assert quad_moment(m, 0) == pytest.approx(1.0, rel=1e-10)


def test_user_density_bad_v0():
    with pytest.raises(MeasureError):
        symmetric_density(lambda z: np.exp(-z ** 2 / 2), v0=0.6)


def test_registered_density_from_config():
    register_density("bump", lambda z: np.where(np.abs(z) < 1, 1 - z * z, 0.0), support=1.0)
    m = make_measure({"kind": "density", "name": "bump"})
    assert m.variance == pytest.approx(0.2, rel=1e-9)


def test_sample_iid_examples():
    c = sample_iid(bernoulli(1.0), 4, seed=3)
    assert set(np.unique(c.entries)) <= {-1.0, 1.0}
    assert c.t == 4.0
    one = sample_iid(gaussian(1.0), 1, seed=5)
    assert one.s == one.entries[0] and one.t == one.entries[0] ** 2


def test_sample_iid_deterministic():
    a = sample_iid(uniform(1.0), 1000, seed=11)
    b = sample_iid(uniform(1.0), 1000, seed=11)
    assert np.array_equal(a.entries, b.entries)


def test_sample_iid_lln_over_seeds():
    hits = sum(abs(sample_iid(gaussian(1.0), 10**5, seed=s).t / 1e5 - 1) < 0.02
               for s in range(100))
    assert hits >= 99


@given(st.floats(0.05, 20.0))
@settings(max_examples=25, deadline=None)
def test_gaussian_sampler_variance_scaling(var):
    x = gaussian(var).sample(np.random.default_rng(0), 20000)
    assert np.var(x) == pytest.approx(var, rel=0.05)


@pytest.mark.parametrize("m", [gaussian(1.0), uniform(1.0), bernoulli(1.0),
                               zero_atom_mixture(0.3, uniform(1.0))])
def test_tilted_sampler_mean(m):
    u = 0.7
    lam, f, _ = m.tilted(u, 0.0, 2)
    x = m.sample_tilted(np.random.default_rng(1), u, 200000)
    assert np.mean(x) == pytest.approx(f[1], abs=4 * math.sqrt(f[2] / 2e5))


def test_theorem1_conditions():
    g = theorem1_conditions(gaussian(1.0))
    assert g.has_density and g.overall
    b = theorem1_conditions(bernoulli(1.0))
    assert b.finite_atoms and b.atom_at_zero == 0 < INV_SQRT_E and b.overall
    bad = theorem1_conditions(zero_atom_mixture(0.7, uniform(1.0)))
    assert INV_SQRT_E == pytest.approx(0.6065306597)
    assert not (bad.has_density or bad.finite_atoms or bad.gap_above_zero
                or bad.atom_below_inv_sqrt_e)
    assert not bad.overall
    assert theorem1_conditions(zero_atom_mixture(0.5, uniform(1.0))).overall


def test_condition_c_uniform_closed_form():
    # f = 1/(2a) on [-a, a]: value 2 f^{2p} (2a)^{3-p} / ((2-p)(3-p))
    a, p = 1.0, 1.5
    ref = 2 * (1 / (2 * a)) ** (2 * p) * (2 * a) ** (3 - p) / ((2 - p) * (3 - p))
    r = condition_c_integral(uniform(a), p)
    assert r.finite and r.value == pytest.approx(ref, rel=1e-8)
    assert ref == pytest.approx(0.94281, rel=1e-5)


def test_condition_c_gaussian_closed_form_and_bound():
    r = condition_c_integral(gaussian(1.0), 1.5)
    ref = (2 * math.pi) ** -1.5 * math.sqrt(2 * math.pi / 3) * math.gamma(0.25) * (8 / 3) ** 0.25
    assert r.value == pytest.approx(ref, rel=1e-8)
    finf = 1 / math.sqrt(2 * math.pi)
    int_f32 = (2 * math.pi) ** -0.75 * math.sqrt(4 * math.pi / 3)
    assert r.value <= finf ** 1.5 * int_f32 * 4 + int_f32 ** 2


def test_condition_c_preconditions():
    with pytest.raises(ValueError):
        condition_c_integral(gaussian(1.0), 1.0)
    with pytest.raises(MeasureError):
        condition_c_integral(bernoulli(1.0), 1.5)
    assert not condition_c_integral(uniform(1.0), 2.0).finite
