"""Experiment configuration: flat INI sections with command-line overrides.

A config file looks like::

    [measure]
    kind = gaussian
    variance = 1

    [experiment]
    ladder = 100, 1000
    seed = 7
    sampler = exact

    [thresholds]
    alpha = 0.01

Every field of :class:`ExperimentConfig` lives in ``[experiment]`` or
``[thresholds]``; unknown keys are rejected so that typos do not pass
silently.
"""

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .measures import make_measure


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    alpha: float = 0.01            # KS level
    ks_max: Optional[float] = None  # absolute KS bound, replaces the critical value when set
    tol: float = 0.1               # deviation radius for the concentration test
    component: str = "t"
    p_max: float = 0.01            # exceedance bound at the largest n
    min_ess: float = 100.0
    gap_tol: float = 1e-9
    oracle_tol: float = 1e-8
    coef_rtol: float = 0.02
    d4_rtol: float = 0.05
    zn_rtol: float = 0.1
    sigmas: float = 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    measure: dict = field(default_factory=lambda: {"kind": "gaussian", "variance": "1"})
    ladder: tuple = (100, 1000)
    seed: int = 0
    out: str = "cwsoc-out"
    sampler: str = "exact"         # exact | mcmc
    samples: int = 100000          # exact draws per n
    sweeps: int = 20000
    burn_in: Optional[int] = None
    thin: int = 1
    chains: int = 4
    workers: int = 1
    draws: int = 1000000           # importance draws per n
    proposal: str = "tilted"
    grid: tuple = (20, 20)
    u_range: tuple = (-1.0, 1.0)
    v_range: tuple = (-1.0, 0.25)
    points: tuple = ()             # explicit (x, y) points for cramer-eval
    radius: float = 0.02
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        lad = list(self.ladder)
        if not lad or any(b <= a for a, b in zip(lad, lad[1:])) or lad[0] < 1:
            raise ConfigError("ladder must be a strictly increasing list of positive counts")
        if self.sampler not in ("exact", "mcmc"):
            raise ConfigError("sampler must be 'exact' or 'mcmc'")
        if self.proposal not in ("plain", "tilted"):
            raise ConfigError("proposal must be 'plain' or 'tilted'")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned value")

    def build_measure(self):
        return make_measure(self.measure)


def _int(raw):
    try:
        return int(raw)
    except ValueError:
        return int(float(raw))


_OPTIONAL = {"burn_in": _int, "ks_max": float}


def _parse_value(raw, default, name):
    raw = raw.strip()
    try:
        if name in _OPTIONAL:
            return None if raw.lower() in ("", "none") else _OPTIONAL[name](raw)
        if isinstance(default, int):
            return _int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if name == "points":
                pts = [p for p in raw.split(";") if p.strip()]
                return tuple(tuple(float(c) for c in p.split(",")) for p in pts)
            items = [s for s in raw.split(",") if s.strip()]
            cast = _int if name in ("ladder", "grid") else float
            return tuple(cast(s.strip()) for s in items)
        return raw
    except ValueError as exc:
        raise ConfigError("bad value for %s: %r" % (name, raw)) from exc


def _apply(obj, values, section):
    known = {f.name: f for f in fields(obj) if f.name not in ("measure", "thresholds")}
    changes = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError("unknown key %r in [%s]" % (key, section))
        default = getattr(obj, key)
        changes[key] = _parse_value(str(raw), default, key)
    return replace(obj, **changes)


def load_config(path=None, overrides=None):
    """Read ``path`` (optional) and apply ``overrides``, a mapping of ``section.key`` to string."""
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError("override %r must look like section.key" % dotted)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))
    for section in cp.sections():
        if section not in ("measure", "experiment", "thresholds", "run", "versions"):
            raise ConfigError("unknown section [%s]" % section)
    try:
        cfg = ExperimentConfig()
        if cp.has_section("measure"):
            cfg = replace(cfg, measure=dict(cp.items("measure")))
        th = Thresholds()
        if cp.has_section("thresholds"):
            th = _apply(th, dict(cp.items("thresholds")), "thresholds")
        exp = dict(cp.items("experiment")) if cp.has_section("experiment") else {}
        return _apply(replace(cfg, thresholds=th), exp, "experiment")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(",".join(repr(c) for c in p) for p in v)
        return ", ".join(repr(c) for c in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg, command=None, versions=None):
    """Render ``cfg`` as INI text that :func:`load_config` reads back unchanged."""
    cp = configparser.ConfigParser(interpolation=None)
    if command:
        cp["run"] = {"command": command}
    cp["measure"] = {k: str(v) for k, v in sorted(cfg.measure.items())}
    exp = asdict(cfg)
    exp.pop("measure")
    th = exp.pop("thresholds")
    cp["experiment"] = {k: _fmt(getattr(cfg, k)) for k in exp}
    cp["thresholds"] = {k: _fmt(getattr(cfg.thresholds, k)) for k in th}
    if versions:
        cp["versions"] = dict(versions)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
