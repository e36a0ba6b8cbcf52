"""Samplers for the self-tuned Curie-Weiss measure.

The model weights a configuration of ``n`` i.i.d. draws from ``rho`` by
``exp(S_n^2 / (2 T_n))`` (configurations with ``T_n = 0`` are excluded).
:func:`mcmc_sample` runs single-site Metropolis with proposals drawn from
``rho`` itself; the Bernoulli and Gaussian cases have exact samplers used as
oracles, and :func:`importance_zn` estimates the normalisation ``Z_n``.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.special import gammaln, logsumexp

from . import _quadrature as quad
from .stats import effective_sample_size, integrated_autocorr_time, jackknife

BLOCK = 1 << 20
CHECK_SWEEPS = 1000
MAX_EXACT_N = 10**8


@dataclass
class Configuration:
    """Spin values with cached ``S_n`` (sum) and ``T_n`` (sum of squares)."""

    entries: np.ndarray
    s: float
    t: float

    @classmethod
    def from_entries(cls, entries):
        x = np.array(entries, dtype=float).ravel()
        return cls(x, float(x.sum()), float(np.dot(x, x)))

    @property
    def n(self):
        return self.entries.size

    def is_coherent(self, rtol=1e-9):
        tol = rtol * self.n
        x = self.entries
        return abs(self.s - x.sum()) <= tol and abs(self.t - np.dot(x, x)) <= tol


def model_log_weight(c):
    """``S^2 / (2T)`` for ``T > 0``, ``-inf`` for the excluded all-zero configuration."""
    if c.t <= 0:
        return -math.inf
    return c.s * c.s / (2.0 * c.t)


# ----------------------------------------------------------------------- MCMC

@numba.njit(nogil=True, cache=True)
def _metropolis(x, state, sites, props, logu, counter, thin, check_every,
                out_s, out_t, out_x, k, keep_x):
    # state = [s, t, nonzero count, accepted, max cache drift]
    s = state[0]
    t = state[1]
    nz = int(state[2])
    acc = int(state[3])
    drift = state[4]
    n = x.shape[0]
    for i in range(sites.shape[0]):
        j = sites[i]
        xo = x[j]
        xn = props[i]
        nz_new = nz - (xo != 0.0) + (xn != 0.0)
        if nz_new > 0:
            sn = s - xo + xn
            tn = t - xo * xo + xn * xn
            d = sn * sn / (2.0 * tn) - s * s / (2.0 * t)
            if d >= 0.0 or logu[i] < d:
                x[j] = xn
                s = sn
                t = tn
                nz = nz_new
                acc += 1
        counter += 1
        if counter % check_every == 0:
            s2 = 0.0
            t2 = 0.0
            for q in range(n):
                s2 += x[q]
                t2 += x[q] * x[q]
            drift = max(drift, abs(s2 - s), abs(t2 - t))
            s = s2
            t = t2
        if thin > 0 and counter % thin == 0 and k < out_s.shape[0]:
            out_s[k] = s
            out_t[k] = t
            if keep_x:
                for q in range(n):
                    out_x[k, q] = x[q]
            k += 1
    state[0] = s
    state[1] = t
    state[2] = nz
    state[3] = acc
    state[4] = drift
    return counter, k


@dataclass(frozen=True)
class ChainDiagnostics:
    acceptance_rate: float
    ess: float
    autocorr_time: float
    sweeps: int
    retained: int
    max_cache_drift: float

    @property
    def poor_mixing(self):
        return self.ess < 100


@dataclass(frozen=True)
class McmcResult:
    """Retained ``(S_n, T_n)`` per chain, shape ``(chains, retained)``."""

    n: int
    s: np.ndarray
    t: np.ndarray
    chains: list
    configs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ess(self):
        return float(sum(c.ess for c in self.chains))

    @property
    def diagnostics(self):
        return ChainDiagnostics(
            acceptance_rate=float(np.mean([c.acceptance_rate for c in self.chains])),
            ess=self.ess,
            autocorr_time=float(np.mean([c.autocorr_time for c in self.chains])),
            sweeps=int(sum(c.sweeps for c in self.chains)),
            retained=int(self.s.size),
            max_cache_drift=float(max(c.max_cache_drift for c in self.chains)),
        )


def _run_chain(m, n, sweeps, burn_in, thin_updates, seed_seq, keep_configs):
    rng = np.random.default_rng(seed_seq)
    x = m.sample(rng, n).astype(float)
    while not np.any(x != 0):
        x = m.sample(rng, n).astype(float)
    state = np.array([x.sum(), np.dot(x, x), np.count_nonzero(x), 0.0, 0.0])
    check_every = CHECK_SWEEPS * n
    total = sweeps * n
    retained = total // thin_updates
    out_s = np.empty(retained)
    out_t = np.empty(retained)
    out_x = np.empty((retained if keep_configs else 0, n))
    dummy_s = np.empty(0)
    dummy_x = np.empty((0, n))

    def run(updates, thin, os_, ot_, ox_, k, keep):
        counter = 0
        done = 0
        while done < updates:
            b = min(BLOCK, updates - done)
            sites = rng.integers(0, n, b)
            props = np.asarray(m.sample(rng, b), dtype=float)
            logu = np.log(rng.random(b))
            counter, k = _metropolis(x, state, sites, props, logu, counter, thin, check_every,
                                     os_, ot_, ox_, k, keep)
            done += b
        return k

    run(burn_in * n, 0, dummy_s, dummy_s, dummy_x, 0, False)
    state[3] = 0.0
    run(total, thin_updates, out_s, out_t, out_x, 0, keep_configs)
    if state[4] > 1e-9 * n:
        raise RuntimeError("cached sums drifted by %.3g" % state[4])
    series = out_s / n ** 0.75
    tau = integrated_autocorr_time(series)
    diag = ChainDiagnostics(
        acceptance_rate=state[3] / total, ess=series.size / tau, autocorr_time=tau,
        sweeps=sweeps, retained=retained, max_cache_drift=state[4],
    )
    return out_s, out_t, (out_x if keep_configs else None), diag


def mcmc_sample(m, n, sweeps, burn_in=None, thin=1, seed=0, chains=1,
                keep_configs=False, thin_updates=None, workers=1):
    """Single-site Metropolis chains targeting the model measure.

    Each update picks a uniform site, proposes a fresh draw from ``rho`` and
    accepts with probability ``min(1, exp(delta))`` where ``delta`` is the
    change of ``S^2/(2T)``; proposals emptying the configuration are
    rejected.  ``sweeps`` and ``burn_in`` count ``n`` updates each, one
    sample is retained every ``thin`` sweeps (or every ``thin_updates``
    single updates when given).  Chains get independent child seeds of
    ``seed`` and may run on ``workers`` threads.
    """
    from .measures import theorem1_conditions
    if n < 2:
        raise ValueError("n must be at least 2")
    if not theorem1_conditions(m).overall:
        warnings.warn("measure fails all convergence hypotheses; sampling anyway")
    if burn_in is None:
        burn_in = 10 * n
    thin_updates = int(thin_updates) if thin_updates else int(thin) * n
    children = np.random.SeedSequence(seed).spawn(chains)
    args = [(m, n, int(sweeps), int(burn_in), thin_updates, c, keep_configs) for c in children]
    if workers > 1 and chains > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda a: _run_chain(*a), args))
    else:
        results = [_run_chain(*a) for a in args]
    s = np.stack([r[0] for r in results])
    t = np.stack([r[1] for r in results])
    configs = np.stack([r[2] for r in results]) if keep_configs else None
    return McmcResult(n=n, s=s, t=t, chains=[r[3] for r in results], configs=configs)


# -------------------------------------------------------------- exact laws

def exact_bernoulli_sn(c, n):
    """Exact law of ``S_n`` for ``rho = (delta_{-c} + delta_c)/2``.

    Returns ``(values, probabilities)`` with ``values = c (2k - n)``.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if n > MAX_EXACT_N:
        raise ValueError("n = %d beyond the supported range" % n)
    k = np.arange(n + 1)
    m = 2 * k - n
    logp = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + m * m / (2.0 * n)
    p = np.exp(logp - logsumexp(logp))
    return c * m.astype(float), p / p.sum()


class _WLaw:
    """Inverse-CDF sampler of ``w`` with density ``(1-w^2)^{(n-3)/2} e^{n w^2/2}``."""

    def __init__(self, n, tol=1e-11):
        a = (n - 3) / 2.0

        def logq(w):
            with np.errstate(divide="ignore", invalid="ignore"):
                base = np.log1p(-w * w)
                return (a * base if a != 0 else 0.0 * w) + n * w * w / 2.0

        lo, hi = quad.active_interval(logq, -1.0, 1.0, 1.0, cut=45.0)
        lo, hi = min(lo, -1e-3), max(hi, 1e-3)
        check = np.linspace(lo, hi, 65)
        points = 1025
        prev = None
        while True:
            w = np.linspace(lo, hi, points)
            g = logq(w)
            p = np.exp(g - np.nanmax(g))
            p[~np.isfinite(p)] = 0.0
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(w))])
            cdf /= cdf[-1]
            if np.any(np.diff(cdf) < 0):
                raise FloatingPointError("grid CDF of w is not monotone")
            cur = np.interp(check, w, cdf)
            if prev is not None and np.max(np.abs(cur - prev)) < tol:
                break
            if points > 2**22:
                raise FloatingPointError("grid CDF of w did not converge")
            prev = cur
            points = 2 * points - 1
        self.w, self.cdf = w, cdf

    def sample(self, rng, size):
        return np.interp(rng.random(size), self.cdf, self.w)


def exact_gaussian_st(variance, n, samples, seed):
    """Exact draws of ``(S_n, T_n)`` for centered Gaussian ``rho``.

    Uses ``x = r * omega`` with ``r^2 = T_n`` distributed as ``variance *
    chi^2_n`` independently of the direction; ``w = S_n/(sqrt(n) r)`` is
    sampled from its one-dimensional density.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    rng = np.random.default_rng(seed)
    w = _WLaw(n).sample(rng, samples)
    t = variance * rng.chisquare(n, samples)
    return np.sqrt(t) * w * math.sqrt(n), t


def exact_gaussian_sample(variance, n, samples, seed):
    """Exact draws of ``S_n`` for centered Gaussian ``rho``."""
    return exact_gaussian_st(variance, n, samples, seed)[0]


# ------------------------------------------------------- normalisation Z_n

@dataclass(frozen=True)
class ZnEstimate:
    n: int
    estimate: float
    stderr: float
    ess: float
    draws: int
    proposal: str

    @property
    def ess_fraction(self):
        return self.ess / self.draws


def _tilt_grid(m, n):
    """Tilts spreading ``S_n`` over the fluctuation window of the model."""
    s = math.sqrt(m.variance)
    u_max = 3.5 * n ** -0.25 / m.mu4 ** 0.25
    k = int(math.ceil(2 * u_max * s * math.sqrt(n))) + 1
    k += (k + 1) % 2  # odd count so that u = 0 is included
    return np.linspace(-u_max, u_max, k)


def importance_zn(m, n, draws, seed, proposal="tilted", batch=None):
    """Estimate ``Z_n = E[exp(S_n^2/(2 T_n)) 1{T_n > 0}]`` under ``rho^n``.

    ``proposal="plain"`` averages the weight over i.i.d. ``rho^n`` draws.
    ``proposal="tilted"`` draws from an equal mixture of exponentially tilted
    products ``rho_u^n`` and reweights by the exact likelihood ratio, which
    depends on ``S_n`` only; this keeps the weights bounded on the
    ``n^{3/4}`` window that carries ``Z_n``.
    """
    if proposal not in ("plain", "tilted"):
        raise ValueError("proposal must be 'plain' or 'tilted'")
    rng = np.random.default_rng(seed)
    if batch is None:
        batch = max(1, min(draws, 2_000_000 // n))
    tilts = _tilt_grid(m, n) if proposal == "tilted" else np.zeros(1)
    log_mgf = np.array([m.tilted(float(u), 0.0, jmax=0)[0] for u in tilts])
    logw = np.empty(draws)
    done = 0
    while done < draws:
        b = min(batch, draws - done)
        if proposal == "plain":
            x = m.sample(rng, (b, n))
        else:
            comp = rng.integers(0, tilts.size, b)
            x = np.empty((b, n))
            for k in np.unique(comp):
                rows = comp == k
                x[rows] = m.sample_tilted(rng, float(tilts[k]), (int(rows.sum()), n))
        s = x.sum(axis=1)
        t = np.einsum("ij,ij->i", x, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.where(t > 0, s * s / (2 * t), -np.inf)
        if proposal == "tilted":
            log_q = logsumexp(np.outer(s, tilts) - n * log_mgf, axis=1) - math.log(tilts.size)
            lw = lw - log_q
        logw[done:done + b] = lw
        done += b
    w = np.exp(logw)
    est, se = jackknife(np.mean, w, blocks=100)
    ess = w.sum() ** 2 / np.dot(w, w)
    if ess / draws < 0.01:
        warnings.warn("importance sampling ESS fraction %.2g below 1%%" % (ess / draws))
    return ZnEstimate(n, float(est), float(se), float(ess), int(draws), proposal)


def zn_asymptotic(m, n):
    """Leading asymptotic ``Z_n ~ n^{1/4} (12 sigma^8/mu4)^{1/4} Gamma(1/4) / (2 sqrt(2 pi sigma^2))``."""
    s2 = m.variance
    return (n ** 0.25 * 0.5 * (12 * s2 ** 4 / m.mu4) ** 0.25 * math.gamma(0.25)
            / math.sqrt(2 * math.pi * s2))


__all__ = [
    "Configuration", "model_log_weight", "mcmc_sample", "McmcResult", "ChainDiagnostics",
    "exact_bernoulli_sn", "exact_gaussian_sample", "exact_gaussian_st", "importance_zn",
    "ZnEstimate", "zn_asymptotic", "effective_sample_size",
]
