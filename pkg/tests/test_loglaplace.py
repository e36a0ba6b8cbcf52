import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwsoc.loglaplace import (
    DomainError, bernoulli_log_laplace, gaussian_log_laplace, log_laplace, moment_function,
    moment_functions,
)
from cwsoc.measures import bernoulli, discrete, gaussian, uniform

G = gaussian(1.0)
U = uniform(1.0)
B = bernoulli(1.0)


@pytest.mark.parametrize("m", [G, gaussian(2.0), U, B])
def test_origin_values(m):
    dp = log_laplace(m, 0.0, 0.0)
    assert dp.lambda_val == pytest.approx(0.0, abs=1e-14)
    assert dp.grad == pytest.approx([0.0, m.variance], abs=1e-13)
    assert dp.hessian == pytest.approx(np.diag([m.variance, m.mu4 - m.variance ** 2]), abs=1e-12)


@given(st.floats(-3, 3), st.floats(-2, 0.45))
@settings(max_examples=60, deadline=None)
def test_gaussian_closed_form(u, v):
    assert log_laplace(G, u, v).lambda_val == pytest.approx(
        gaussian_log_laplace(1.0, u, v), rel=1e-11, abs=1e-12)


@given(st.floats(-5, 5), st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_bernoulli_closed_form(u, v):
    assert log_laplace(B, u, v).lambda_val == pytest.approx(
        bernoulli_log_laplace(1.0, u, v), rel=1e-12, abs=1e-12)


def test_uniform_moment_closed_form():
    # u = 0: E[Z^2 e^{vZ^2}] / E[e^{vZ^2}] on [-1, 1]
    v = 0.8
    from scipy.integrate import quad
    num = quad(lambda z: z * z * math.exp(v * z * z), 0, 1, epsabs=0, epsrel=1e-13)[0]
    den = quad(lambda z: math.exp(v * z * z), 0, 1, epsabs=0, epsrel=1e-13)[0]
    assert moment_function(U, 2, 0.0, v) == pytest.approx(num / den, rel=1e-12)


def test_gradient_matches_finite_differences():
    u, v, h = 0.4, -0.3, 1e-5
    dp = log_laplace(U, u, v)
    du = (log_laplace(U, u + h, v).lambda_val - log_laplace(U, u - h, v).lambda_val) / (2 * h)
    dv = (log_laplace(U, u, v + h).lambda_val - log_laplace(U, u, v - h).lambda_val) / (2 * h)
    assert dp.grad == pytest.approx([du, dv], rel=1e-7)


def test_domain_enforced():
    with pytest.raises(DomainError):
        moment_functions(G, 0.0, 0.5)
    with pytest.raises(DomainError):
        log_laplace(gaussian(2.0), 0.0, 0.3)
    assert math.isfinite(log_laplace(U, 0.0, 50.0).lambda_val)


def test_near_domain_boundary_accuracy():
    v = 0.5 - 1e-6
    assert log_laplace(G, 0.3, v).lambda_val == pytest.approx(
        gaussian_log_laplace(1.0, 0.3, v), rel=1e-10)


@pytest.mark.parametrize("m", [G, U, discrete([-2, -1, 1, 2], [0.1, 0.4, 0.4, 0.1])])
def test_hessian_positive_definite(m):
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.uniform(-2, 2)
        v = rng.uniform(-2, min(m.v0 - 0.05, 2))
        h = log_laplace(m, u, v).hessian
        assert np.allclose(h, h.T)
        assert np.linalg.det(h) > 0 and np.trace(h) > 0


@pytest.mark.parametrize("m", [G, U, B])
def test_convexity_probe(m):
    rng = np.random.default_rng(1)
    vmax = min(m.v0 - 0.05, 2.0)
    lam = lambda p: log_laplace(m, *p).lambda_val
    for _ in range(30):
        p = np.array([rng.uniform(-2, 2), rng.uniform(-2, vmax)])
        q = np.array([rng.uniform(-2, 2), rng.uniform(-2, vmax)])
        t = rng.uniform()
        assert lam(t * p + (1 - t) * q) <= t * lam(p) + (1 - t) * lam(q) + 1e-10


def test_symmetry_in_u():
    a = log_laplace(U, 0.7, 0.2)
    b = log_laplace(U, -0.7, 0.2)
    assert a.lambda_val == pytest.approx(b.lambda_val, rel=1e-13)
    assert a.grad[0] == pytest.approx(-b.grad[0], rel=1e-12)


def test_moment_function_validation():
    with pytest.raises(ValueError):
        moment_function(G, -1, 0.0, 0.0)
    assert moment_function(G, 4, 0.0, 0.0) == pytest.approx(3.0, rel=1e-12)
    assert moment_function(G, 6, 0.0, 0.0) == pytest.approx(15.0, rel=1e-12)
