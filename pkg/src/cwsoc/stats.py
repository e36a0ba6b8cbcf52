"""Small statistical helpers: KS distances, autocorrelation/ESS, jackknife."""

import numpy as np
from scipy import stats as sps


def integrated_autocorr_time(y, window_c=5.0):
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 4:
        return 1.0
    x = y - y.mean()
    var = np.dot(x, x)
    if var == 0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / var
    taus = 2.0 * np.cumsum(acf) - 1.0
    m = np.arange(n)
    ok = m >= window_c * taus
    idx = np.argmax(ok) if np.any(ok) else n - 1
    return float(max(taus[idx], 1.0))


def effective_sample_size(y):
    y = np.asarray(y)
    return y.size / integrated_autocorr_time(y)


def jackknife(stat, data, blocks=100):
    """Block jackknife estimate and standard error of ``stat(data)``.

    ``data`` is split along its first axis into ``blocks`` contiguous blocks.
    """
    data = np.asarray(data)
    n = data.shape[0]
    blocks = max(2, min(blocks, n))
    edges = np.linspace(0, n, blocks + 1).astype(int)
    full = stat(data)
    loo = np.array([stat(np.concatenate([data[:edges[k]], data[edges[k + 1]:]]))
                    for k in range(blocks)])
    se = np.sqrt((blocks - 1) / blocks * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, se


def ks_statistic(samples, cdf):
    """One-sample Kolmogorov-Smirnov distance to a continuous ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_discrete(values, probs, cdf):
    """KS distance between a discrete law (atoms ``values`` with ``probs``) and ``cdf``."""
    order = np.argsort(values)
    v = np.asarray(values, dtype=float)[order]
    p = np.asarray(probs, dtype=float)[order]
    upper = np.cumsum(p)
    lower = upper - p
    f = cdf(v)
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f))))


def ks_two_sample(a, b):
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    allv = np.concatenate([a, b])
    fa = np.searchsorted(a, allv, side="right") / a.size
    fb = np.searchsorted(b, allv, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n_eff, alpha=0.01, m_eff=None):
    """Asymptotic critical KS distance at level ``alpha``."""
    c = sps.kstwobign.isf(alpha)
    if m_eff is None:
        return float(c / np.sqrt(n_eff))
    return float(c * np.sqrt((n_eff + m_eff) / (n_eff * m_eff)))


def ks_pvalue(d, n_eff):
    return float(sps.kstwobign.sf(d * np.sqrt(n_eff)))


def chi_square_gof(counts, probs, scale=1.0, min_expected=5.0):
    """Chi-square test of observed ``counts`` against ``probs``.

    ``scale`` (ESS / N for correlated samples) deflates the statistic.  Cells
    with small expected counts are pooled into their neighbours.
    Returns ``(statistic, dof, p_value)``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    total = counts.sum()
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, probs * total):
        acc_o += o
        acc_e += e
        if acc_e * scale >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and exp:
        obs[-1] += acc_o
        exp[-1] += acc_e
    obs = np.array(obs)
    exp = np.array(exp)
    stat = float(np.sum((obs - exp) ** 2 / exp) * scale)
    dof = len(obs) - 1
    return stat, dof, float(sps.chi2.sf(stat, dof))
