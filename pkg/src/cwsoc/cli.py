"""``cwsoc`` command line: reproducible experiment runs with persisted outputs.

Each command writes ``<out>/<command>/`` containing ``manifest.txt`` (the
resolved config, re-runnable with ``--config``), one or more CSV files and
``summary.txt`` with ``PASS``/``FAIL`` lines.  The exit status is 0 iff all
checks pass, 1 if a check fails, 2 on usage or config errors and 3 when a
numerical subsystem fails.
"""

import argparse
import glob
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from . import cramer as cr
from . import fluctuations as fl
from . import loglaplace as ll
from . import sampler as sp
from .config import ConfigError, dump_config, load_config
from .measures import MeasureError

COMMANDS = ("sample", "lambda-eval", "cramer-eval", "check-inequality", "check-expansion",
            "theorem1-test", "fluctuation-test", "zn-estimate", "report")


class SubsystemError(RuntimeError):
    def __init__(self, subsystem, msg):
        super().__init__(msg)
        self.subsystem = subsystem


class Run:
    """Collects CSV tables, summary lines and checks of one command."""

    def __init__(self):
        self.tables = {}
        self.info = []
        self.checks = []

    def table(self, name, header, rows):
        self.tables[name] = (header, rows)

    def note(self, key, value):
        self.info.append((key, value))

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)


def _cell(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % v


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_cell(v) for v in r) + "\n")


def _fmt(v):
    return _cell(v) if isinstance(v, (float, int, np.floating, np.integer)) else str(v)


def versions():
    import numba
    import scipy
    return {"cwsoc": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _map(cfg, func, items):
    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


def _cell_seed(cfg, n):
    return [cfg.seed, int(n)]


# ------------------------------------------------------------------ sampling

def draw_sn_tn(m, n, cfg):
    """``(S_n, T_n, n_eff, tag, diagnostics)`` from the configured sampler."""
    seed = _cell_seed(cfg, n)
    if cfg.sampler == "mcmc":
        res = sp.mcmc_sample(m, n, cfg.sweeps, burn_in=cfg.burn_in, thin=cfg.thin,
                             seed=seed, chains=cfg.chains)
        return res.s.ravel(), res.t.ravel(), res.ess, "mcmc", res.diagnostics
    if m.kind == "gaussian":
        s, t = sp.exact_gaussian_st(m.variance, n, cfg.samples, seed)
        return s, t, float(s.size), "exact-gaussian", None
    if m.kind == "bernoulli":
        vals, probs = sp.exact_bernoulli_sn(math.sqrt(m.variance), n)
        rng = np.random.default_rng(seed)
        s = rng.choice(vals, size=cfg.samples, p=probs)
        return s, np.full(s.size, n * m.variance), float(s.size), "exact-bernoulli", None
    raise ConfigError("exact sampler exists for gaussian and bernoulli measures only; "
                      "use sampler = mcmc")


def cmd_sample(m, cfg, run):
    def cell(n):
        return n, draw_sn_tn(m, n, cfg)

    for n, (s, t, n_eff, tag, diag) in _map(cfg, cell, list(cfg.ladder)):
        run.table("samples_n%d" % n, ["S_n", "T_n"], zip(s, t))
        run.note("n%d.sampler" % n, tag)
        run.note("n%d.retained" % n, s.size)
        run.note("n%d.ess" % n, n_eff)
        run.note("n%d.mean_S_n/n" % n, float(np.mean(s) / n))
        run.note("n%d.mean_T_n/n" % n, float(np.mean(t) / n))
        run.check("n%d.bound" % n, np.all(t > 0) and np.all(s * s <= n * t * (1 + 1e-12)),
                  "0 < T_n and S_n^2 <= n T_n")
        if diag is not None:
            run.note("n%d.acceptance_rate" % n, diag.acceptance_rate)
            run.note("n%d.autocorr_time" % n, diag.autocorr_time)
            run.note("n%d.max_cache_drift" % n, diag.max_cache_drift)
            run.check("n%d.ess" % n, diag.ess >= cfg.thresholds.min_ess,
                      "ess %.1f >= %g" % (diag.ess, cfg.thresholds.min_ess))


# ------------------------------------------------------------ deterministic

def cmd_lambda_eval(m, cfg, run):
    nu, nv = cfg.grid
    us = np.linspace(cfg.u_range[0], cfg.u_range[1], nu)
    vs = np.linspace(cfg.v_range[0], cfg.v_range[1], nv)
    rows, worst, bad, not_pd = [], 0.0, 0, 0
    oracle = None
    if m.kind == "gaussian":
        oracle = lambda u, v: ll.gaussian_log_laplace(m.variance, u, v)
    elif m.kind == "bernoulli":
        oracle = lambda u, v: ll.bernoulli_log_laplace(math.sqrt(m.variance), u, v)
    for u in us:
        for v in vs:
            try:
                dp = ll.log_laplace(m, u, v)
            except ll.DomainError as exc:
                raise SubsystemError("loglaplace", str(exc)) from None
            f = dp.moments
            rows.append((u, v, dp.lambda_val, f[1], f[2], f[3], f[4]))
            bad += not dp.converged
            h = dp.hessian
            if not m.is_degenerate and not (np.linalg.det(h) > 0 and np.trace(h) > 0):
                not_pd += 1
            if oracle is not None:
                worst = max(worst, abs(dp.lambda_val - oracle(u, v)))
    run.table("lambda", ["u", "v", "Lambda", "f1", "f2", "f3", "f4"], rows)
    run.note("points", len(rows))
    run.check("quadrature_converged", bad == 0, "%d unconverged points" % bad)
    run.check("hessian_positive_definite", not_pd == 0, "%d failures" % not_pd)
    if oracle is not None:
        run.check("closed_form", worst <= cfg.thresholds.oracle_tol,
                  "max |Lambda - closed form| = %.3g" % worst)


def _grid_points(m, cfg):
    if cfg.points:
        return [tuple(p) for p in cfg.points]
    return cr.hull_grid(m, *cfg.grid)


def _rate_point(m, x, y):
    """``(I, u, v)``; dual coordinates are nan where no interior maximiser exists."""
    if m.is_degenerate:
        interior = math.isclose(y, m.variance, rel_tol=1e-14) and abs(x) < math.sqrt(m.variance)
    else:
        interior = cr.violated_constraint(m, x, y) is None
    if interior:
        cv = cr.solve_dual(m, x, y)
        return cv.value, cv.maximizer[0], cv.maximizer[1]
    return cr.cramer_transform(m, x, y), math.nan, math.nan


def _oracle(m):
    if m.kind == "gaussian":
        return lambda x, y: cr.gaussian_rate_oracle(m.variance, x, y)
    if m.kind == "bernoulli":
        return lambda x, y: cr.bernoulli_rate_oracle(math.sqrt(m.variance), x)
    return None


def cmd_cramer_eval(m, cfg, run):
    rows, worst = [], 0.0
    oracle = _oracle(m)
    for x, y in _grid_points(m, cfg):
        try:
            val, u, v = _rate_point(m, x, y)
        except (cr.SolverError, cr.AdmissibilityError) as exc:
            raise SubsystemError("cramer", "(%r, %r): %s" % (x, y, exc)) from None
        ok = x * x <= y and (x, y) != (0.0, 0.0)
        gap = val - x * x / (2 * y) if ok else math.nan
        rows.append((x, y, val, u, v, gap))
        if oracle is not None and math.isfinite(val):
            worst = max(worst, abs(val - oracle(x, y)))
    run.table("cramer", ["x", "y", "I", "u", "v", "gap"], rows)
    run.note("points", len(rows))
    gaps = [r[5] for r in rows if not math.isnan(r[5])]
    if gaps:
        run.note("min_gap", min(gaps))
        run.check("gap_nonnegative", min(gaps) >= -cfg.thresholds.gap_tol,
                  "min gap %.3g >= -%g" % (min(gaps), cfg.thresholds.gap_tol))
    if oracle is not None:
        run.check("closed_form", worst <= cfg.thresholds.oracle_tol,
                  "max |I - closed form| = %.3g" % worst)


def cmd_check_inequality(m, cfg, run):
    rep = cr.check_key_inequality(m, _grid_points(m, cfg), gap_tol=cfg.thresholds.gap_tol)
    run.table("inequality", ["x", "y", "gap"], rep.gaps)
    run.note("points", rep.points)
    run.note("min_gap", rep.min_gap)
    run.note("argmin_x", rep.argmin[0])
    run.note("argmin_y", rep.argmin[1])
    run.note("near_zero_points", len(rep.near_zero))
    for (x, y), msg in rep.failures[:10]:
        run.note("failure", "(%r, %r) %s" % (x, y, msg))
    run.check("gap_nonnegative", not rep.violations, "%d violations" % len(rep.violations))
    run.check("solver", not rep.failures, "%d failures" % len(rep.failures))
    run.check("zero_localized", rep.localized, "near-zero gaps within 1e-3 of (0, sigma^2)")


def cmd_check_expansion(m, cfg, run):
    th = cfg.thresholds
    try:
        co = cr.expansion_coefficients(m, radius=cfg.radius)
        de = cr.derivative_identities(m)
    except (ValueError, cr.SolverError) as exc:
        raise SubsystemError("cramer", str(exc)) from None
    a02, a40 = cr.predicted_coefficients(m)
    scale = max(a02, a40)
    rel = lambda a, b: abs(a - b) / abs(b)
    rows = [
        ("a02", co.a02, a02, rel(co.a02, a02)),
        ("a40", co.a40, a40, rel(co.a40, a40)),
        ("a21", co.a21, 0.0, abs(co.a21) / scale),
        ("a30", co.a30, 0.0, abs(co.a30) / scale),
        ("d3I/dx2dy", de.d2x_dy, de.expected_d2x_dy, rel(de.d2x_dy, de.expected_d2x_dy)),
        ("d4I/dx4", de.d4x, de.expected_d4x, rel(de.d4x, de.expected_d4x)),
    ]
    run.table("expansion", ["coefficient", "fitted", "predicted", "relative_error"], rows)
    for name, fit, pred, _ in rows:
        run.note(name, fit)
        run.note(name + ".predicted", pred)
    run.note("fit_residual", co.residual)
    run.note("fit_condition", co.condition)
    run.check("a02", rows[0][3] <= th.coef_rtol, "within %g" % th.coef_rtol)
    run.check("a40", rows[1][3] <= th.coef_rtol, "within %g" % th.coef_rtol)
    run.check("a21", rows[2][3] <= 1e-3, "|a21| <= 1e-3 max(a02, a40)")
    run.check("a30", rows[3][3] <= 1e-3, "|a30| <= 1e-3 max(a02, a40)")
    run.check("d3I/dx2dy", rows[4][3] <= th.coef_rtol, "within %g" % th.coef_rtol)
    run.check("d4I/dx4", rows[5][3] <= th.d4_rtol, "within %g" % th.d4_rtol)


# ------------------------------------------------------------------- tests

def cmd_theorem1_test(m, cfg, run):
    th = cfg.thresholds

    def cell(n):
        s, t, n_eff, tag, _ = draw_sn_tn(m, n, cfg)
        return [fl.theorem1_test(m, s / n, t / n, th.tol, n=n, component=c, n_eff=n_eff)
                for c in ("norm", "s", "t")], tag

    rows, chosen = [], []
    for reps, tag in _map(cfg, cell, list(cfg.ladder)):
        run.note("n%d.sampler" % reps[0].n, tag)
        for r in reps:
            rows.append((r.n, r.component, r.tol, r.prob, r.stderr, r.n_samples))
            if r.component == th.component:
                chosen.append(r)
                run.note("n%d.P(dev>tol)" % r.n, r.prob)
                run.note("n%d.stderr" % r.n, r.stderr)
    run.table("theorem1", ["n", "component", "tol", "P(dev>tol)", "stderr", "samples"], rows)
    probs = [r.prob for r in chosen]
    decreasing = all(b < a or a == b == 0.0 for a, b in zip(probs, probs[1:]))
    run.check("trend_decreasing", decreasing, "component %s: %s" % (
        th.component, ", ".join("%.4g" % p for p in probs)))
    run.check("largest_n", probs[-1] <= th.p_max, "%.4g <= %g" % (probs[-1], th.p_max))


def cmd_fluctuation_test(m, cfg, run):
    th = cfg.thresholds
    law = fl.QuarticLaw()
    if cfg.sampler == "exact" and m.kind == "bernoulli":
        c = math.sqrt(m.variance)
        dists = []
        for n in cfg.ladder:
            vals, probs = sp.exact_bernoulli_sn(c, n)
            s = fl.normalize_fluctuations(m, vals, n)
            d = fl.exact_ks_distance(m, vals, probs, n, law)
            tv = fl.lattice_tv_distance(m, vals, probs, n, law)
            dists.append(d)
            run.table("fluctuation_n%d" % n, ["s", "P", "cdf_exact", "cdf_quartic"],
                      zip(s, probs, np.cumsum(probs), law.cdf(s)))
            run.note("n%d.ks" % n, d)
            run.note("n%d.tv_lattice" % n, tv)
        run.note("sampler", "exact-bernoulli-law")
        run.check("ks_decreasing", all(b < a for a, b in zip(dists, dists[1:])),
                  ", ".join("%.4g" % d for d in dists))
        if th.ks_max is not None:
            run.check("ks_largest_n", dists[-1] <= th.ks_max, "%.4g <= %g" % (dists[-1], th.ks_max))
        return

    def cell(n):
        s, t, n_eff, tag, _ = draw_sn_tn(m, n, cfg)
        x = fl.normalize_fluctuations(m, s, n)
        return n, fl.theorem2_test(x, law, n_eff=n_eff, alpha=th.alpha, sampler_tag=tag)

    for n, rep in _map(cfg, cell, list(cfg.ladder)):
        x = np.sort(rep.normalized_samples)
        emp = np.arange(1, x.size + 1) / x.size
        run.table("fluctuation_n%d" % n, ["s", "cdf_empirical", "cdf_quartic"],
                  zip(x, emp, law.cdf(x)))
        for key in ("n_used", "n_eff", "ks_stat", "ks_critical", "ks_pvalue",
                    "m2", "m2_se", "m4", "m4_se"):
            run.note("n%d.%s" % (n, key), getattr(rep, key))
        run.note("n%d.sampler" % n, rep.sampler_tag)
        if th.ks_max is not None:
            run.check("n%d.ks" % n, rep.ks_stat <= th.ks_max, "%.4g <= %g" % (rep.ks_stat, th.ks_max))
        else:
            run.check("n%d.ks" % n, rep.ks_pass, "%.4g < %.4g" % (rep.ks_stat, rep.ks_critical))
        run.check("n%d.m2" % n, rep.moment_pass(2, th.sigmas, law),
                  "%.5g vs %.5g" % (rep.m2, law.moment(2)))
        run.check("n%d.m4" % n, rep.moment_pass(4, th.sigmas, law),
                  "%.5g vs %.5g" % (rep.m4, law.moment(4)))


def cmd_zn_estimate(m, cfg, run):
    th = cfg.thresholds

    def cell(n):
        return sp.importance_zn(m, n, cfg.draws, _cell_seed(cfg, n), proposal=cfg.proposal)

    rows, ratios = [], []
    for est in _map(cfg, cell, list(cfg.ladder)):
        n = est.n
        asym = sp.zn_asymptotic(m, n)
        r = est.estimate / asym
        rows.append((n, est.estimate, est.stderr, est.ess, est.estimate / n ** 0.25, r))
        ratios.append((n, r, est.stderr / asym))
        run.check("n%d.bounds" % n, 1.0 <= est.estimate <= math.exp(n / 2),
                  "1 <= %.6g <= e^(n/2)" % est.estimate)
        run.note("n%d.ess_fraction" % n, est.ess_fraction)
    run.table("zn", ["n", "Z_n", "stderr", "ess", "Z_n/n^(1/4)", "Z_n/asymptote"], rows)
    run.note("proposal", cfg.proposal)
    for n, r, se in ratios[-2:]:
        lo, hi = r - th.sigmas * se, r + th.sigmas * se
        ok = abs(r - 1) <= th.zn_rtol and lo <= 1 + th.zn_rtol and hi >= 1 - th.zn_rtol
        run.check("n%d.asymptote" % n, ok, "Z_n/asymptote = %.5f +- %.2g" % (r, th.sigmas * se))


def cmd_report(out):
    paths = sorted(glob.glob(os.path.join(out, "*", "summary.txt")))
    if not paths:
        raise SubsystemError("report", "no artifacts found in %s" % out)
    lines, ok = [], True
    for p in paths:
        name = os.path.basename(os.path.dirname(p))
        with open(p) as fh:
            for line in fh:
                if line.startswith(("PASS", "FAIL")):
                    ok &= line.startswith("PASS")
                    lines.append("%s %s" % (name, line.rstrip("\n")))
    lines.append("overall = %s" % ("PASS" if ok else "FAIL"))
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0 if ok else 1


HANDLERS = {
    "sample": cmd_sample, "lambda-eval": cmd_lambda_eval, "cramer-eval": cmd_cramer_eval,
    "check-inequality": cmd_check_inequality, "check-expansion": cmd_check_expansion,
    "theorem1-test": cmd_theorem1_test, "fluctuation-test": cmd_fluctuation_test,
    "zn-estimate": cmd_zn_estimate,
}


def run(cfg, command):
    """Execute ``command`` under ``cfg``, persist its artifacts and return the exit status."""
    if command == "report":
        return cmd_report(cfg.out)
    m = cfg.build_measure()
    result = Run()
    HANDLERS[command](m, cfg, result)
    folder = os.path.join(cfg.out, command)
    os.makedirs(folder, exist_ok=True)
    with open(os.path.join(folder, "manifest.txt"), "w") as fh:
        fh.write(dump_config(cfg, command, versions()))
    for name, (header, rows) in sorted(result.tables.items()):
        write_csv(os.path.join(folder, name + ".csv"), header, rows)
    lines = ["command = %s" % command, "measure = %s" % m.kind]
    lines += ["%s = %s" % (k, _fmt(v)) for k, v in result.info]
    lines += ["%s %s: %s" % ("PASS" if ok else "FAIL", name, detail)
              for name, ok, detail in result.checks]
    lines.append("overall = %s" % ("PASS" if result.passed else "FAIL"))
    text = "\n".join(lines) + "\n"
    with open(os.path.join(folder, "summary.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0 if result.passed else 1


# ---------------------------------------------------------------- argparse

def _experiment_flags():
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="INI config file (a manifest.txt works too)")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--set", action="append", default=S, metavar="SECTION.KEY=VALUE",
                   help="override any config entry")
    p.add_argument("--measure", default=S, help="measure kind (resets [measure])")
    p.add_argument("--param", action="append", default=S, metavar="KEY=VALUE",
                   help="measure parameter, e.g. variance=2")
    p.add_argument("--n", "--ladder", dest="ladder", default=S, help="n or comma-separated n-ladder")
    for flag, key in [("--sampler", "sampler"), ("--samples", "samples"), ("--sweeps", "sweeps"),
                      ("--burn-in", "burn_in"), ("--thin", "thin"), ("--chains", "chains"),
                      ("--workers", "workers"), ("--draws", "draws"), ("--proposal", "proposal"),
                      ("--grid", "grid"), ("--radius", "radius")]:
        p.add_argument(flag, dest=key, default=S)
    p.add_argument("--point", action="append", default=S, metavar="X,Y",
                   help="evaluate at this point (repeatable)")
    return p


def build_parser():
    common = _experiment_flags()
    parser = argparse.ArgumentParser(
        prog="cwsoc", parents=[common],
        description="Curie-Weiss self-organized criticality: rate functions, samplers, limit laws.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sample": "draw (S_n, T_n) from the model measure",
        "lambda-eval": "tabulate Lambda(u, v) and f_1..f_4 on a grid",
        "cramer-eval": "evaluate I(x, y) at points or on a hull grid",
        "check-inequality": "check I >= x^2/(2y) with a unique zero at (0, sigma^2)",
        "check-expansion": "fit the quartic expansion of I - x^2/(2y) near (0, sigma^2)",
        "theorem1-test": "concentration of (S_n/n, T_n/n) along an n-ladder",
        "fluctuation-test": "compare normalised S_n with the exp(-s^4/12) law",
        "zn-estimate": "importance-sampling estimates of Z_n",
        "report": "aggregate summaries found under --out",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


_FLAG_KEYS = ("ladder", "sampler", "samples", "sweeps", "burn_in", "thin", "chains",
              "workers", "draws", "proposal", "grid", "radius", "seed", "out")


def config_from_args(args):
    overrides = {}
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("--set expects SECTION.KEY=VALUE, got %r" % item)
        overrides[key.strip()] = value.strip()
    for key in _FLAG_KEYS:
        if hasattr(args, key):
            overrides["experiment." + key] = str(getattr(args, key))
    if hasattr(args, "point"):
        overrides["experiment.points"] = ";".join(args.point)
    cfg = load_config(getattr(args, "config", None), overrides)
    params = {}
    for item in getattr(args, "param", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("--param expects KEY=VALUE, got %r" % item)
        params[key.strip()] = value.strip()
    if hasattr(args, "measure"):
        cfg = replace(cfg, measure={"kind": args.measure, **params})
    elif params:
        cfg = replace(cfg, measure={**cfg.measure, **params})
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return run(cfg, args.command)
    except (ConfigError, MeasureError, OSError) as exc:
        sys.stderr.write("error [config]: %s\n" % exc)
        return 2
    except SubsystemError as exc:
        sys.stderr.write("error [%s]: %s\n" % (exc.subsystem, exc))
        return 3
    except (cr.SolverError, cr.AdmissibilityError, ll.DomainError, FloatingPointError) as exc:
        sys.stderr.write("error [numerics]: %s\n" % exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
