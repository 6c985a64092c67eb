"""Fit configuration files: INI sections for parameters, profile, solver knobs.

Every model parameter must appear in [parameters], either pinned:

    X_d = fixed 3.79

or free with an initial estimate and bounds (optionally a sampling cap
for the global stage on semi-infinite ranges):

    m = 120, 0, inf, 500

The load profile takes either resistances (r_pre/r_post) or load power
fractions at rated voltage (power_pre/power_post), never both.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .boxmap import BoundSpec
from .dynmodel import NEVER_FREE, PARAM_NAMES, ParameterSet
from .errors import BadBounds, ConfigError
from .golga import GAConfig
from .hbclm import StoppingCriteria
from .integrator import LoadStepProfile, SimConfig

ALGORITHMS = ("bclm", "hbclm")


@dataclass
class FitConfig:
    base: ParameterSet  # full parameter set (free entries hold the initial estimate)
    free_names: tuple
    specs: list  # BoundSpec per free name
    theta0: np.ndarray  # initial estimate for the free names
    profile: LoadStepProfile
    sim: SimConfig
    ga: GAConfig
    stopping: StoppingCriteria
    algorithm: str = "hbclm"
    seed: int = 0


def _parse_float(text, where):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse '{text}' as a number") from None


def _parse_parameter(name, raw):
    """Returns (value, spec-or-None); spec None means fixed."""
    raw = raw.strip()
    if raw.lower().startswith("fixed"):
        rest = raw[5:].strip()
        return _parse_float(rest, f"parameter {name}"), None
    cells = [c.strip() for c in raw.split(",")]
    if len(cells) not in (3, 4):
        raise ConfigError(
            f"parameter {name}: expected 'fixed <value>' or '<init>, <lo>, <hi>[, cap]'")
    init = _parse_float(cells[0], f"parameter {name}")
    lo = _parse_float(cells[1], f"parameter {name}")
    hi = _parse_float(cells[2], f"parameter {name}")
    cap = _parse_float(cells[3], f"parameter {name}") if len(cells) == 4 else 100.0
    if not np.isfinite(lo) and not np.isfinite(hi):
        raise ConfigError(f"parameter {name}: at least one bound must be finite")
    try:
        spec = BoundSpec(lo=lo, hi=hi, sample_cap=cap)
    except BadBounds as exc:
        raise ConfigError(f"parameter {name}: {exc}") from None
    return init, spec


def _profile_from(section):
    keys = set(section.keys())
    has_r = {"r_pre", "r_post"} & keys
    has_p = {"power_pre", "power_post"} & keys
    if has_r and has_p:
        raise ConfigError("[profile]: give either resistances or power fractions, not both")
    t_step = _parse_float(section.get("t_step", "0.5"), "[profile] t_step")
    try:
        if {"r_pre", "r_post"} <= keys:
            return LoadStepProfile(
                _parse_float(section["r_pre"], "[profile] r_pre"),
                _parse_float(section["r_post"], "[profile] r_post"), t_step)
        if {"power_pre", "power_post"} <= keys:
            return LoadStepProfile.from_power_fractions(
                _parse_float(section["power_pre"], "[profile] power_pre"),
                _parse_float(section["power_post"], "[profile] power_post"), t_step)
    except ValueError as exc:
        raise ConfigError(f"[profile]: {exc}") from None
    raise ConfigError("[profile]: needs r_pre/r_post or power_pre/power_post")


def parse_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    if "parameters" not in parser:
        raise ConfigError("missing [parameters] section")
    if "profile" not in parser:
        raise ConfigError("missing [profile] section")

    values = {}
    free_names = []
    specs = []
    theta0 = []
    seen = set()
    for name, raw in parser["parameters"].items():
        canonical = {n.lower(): n for n in PARAM_NAMES}.get(name.lower())
        if canonical is None:
            raise ConfigError(f"unknown parameter: {name}")
        seen.add(canonical)
        value, spec = _parse_parameter(canonical, raw)
        values[canonical] = value
        if spec is not None:
            if canonical in NEVER_FREE:
                raise ConfigError(f"parameter {canonical} must be fixed")
            free_names.append(canonical)
            specs.append(spec)
            theta0.append(value)
    missing = [n for n in PARAM_NAMES if n not in seen]
    if missing:
        raise ConfigError("missing parameters: " + ", ".join(missing))
    # canonical ordering for the estimation vector
    order = sorted(range(len(free_names)),
                   key=lambda i: PARAM_NAMES.index(free_names[i]))
    free_names = tuple(free_names[i] for i in order)
    specs = [specs[i] for i in order]
    theta0 = np.array([theta0[i] for i in order])
    if not free_names:
        raise ConfigError("no free parameters; nothing to estimate")

    base = ParameterSet.from_values(values, free=free_names)
    try:
        base.validate()
    except ValueError as exc:
        raise ConfigError(f"[parameters]: {exc}") from None

    profile = _profile_from(parser["profile"])

    sim_sec = parser["sim"] if "sim" in parser else {}
    try:
        sim = SimConfig(
            t_end=_parse_float(sim_sec.get("t_end", "5.0"), "[sim] t_end"),
            h=_parse_float(sim_sec.get("h", "0.001"), "[sim] h"),
            sample_stride=int(sim_sec.get("sample_stride", "10")))
    except ValueError as exc:
        raise ConfigError(f"[sim]: {exc}") from None

    ga_sec = parser["ga"] if "ga" in parser else {}
    try:
        ga = GAConfig(
            population=int(ga_sec.get("population", "40")),
            generations=int(ga_sec.get("generations", "10")),
            mutate_fraction=_parse_float(ga_sec.get("mutate_fraction", "0.2"),
                                         "[ga] mutate_fraction"))
    except ValueError as exc:
        raise ConfigError(f"[ga]: {exc}") from None

    stop_sec = parser["stopping"] if "stopping" in parser else {}
    try:
        stopping = StoppingCriteria(
            max_iterations=int(stop_sec.get("max_iterations", "50")),
            rel_cost_tol=_parse_float(stop_sec.get("rel_cost_tol", "1e-6"),
                                      "[stopping] rel_cost_tol"))
    except ValueError as exc:
        raise ConfigError(f"[stopping]: {exc}") from None

    fit_sec = parser["fit"] if "fit" in parser else {}
    algorithm = fit_sec.get("algorithm", "hbclm").strip().lower()
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"[fit] algorithm must be one of {ALGORITHMS}; the unconstrained "
            "variant is available via the benchmark command and the library")

    seed_sec = parser["seed"] if "seed" in parser else {}
    try:
        seed = int(seed_sec.get("value", "0"))
    except ValueError:
        raise ConfigError("[seed] value must be an integer") from None

    return FitConfig(base=base, free_names=free_names, specs=specs, theta0=theta0,
                     profile=profile, sim=sim, ga=ga, stopping=stopping,
                     algorithm=algorithm, seed=seed)


def benchmark_config_text(case=1, algorithm="bclm", t_end=5.0, h=1e-3,
                          sample_stride=10, seed=1):
    """Config text reproducing a benchmark case's single step-up fit."""
    from .benchmark import (CASE_INITS, LOAD_POST, LOAD_PRE, LOWER, SAMPLE_CAPS,
                            TRUE_VALUES, T_STEP, UPPER)
    lines = ["[parameters]"]
    inits = CASE_INITS.get(case, CASE_INITS[1])
    for name in PARAM_NAMES:
        if name in LOWER:
            lines.append(f"{name} = {inits[name]!r}, {LOWER[name]!r}, "
                         f"{UPPER[name]!r}, {SAMPLE_CAPS.get(name, 100.0)!r}")
        else:
            lines.append(f"{name} = fixed {TRUE_VALUES[name]!r}")
    lines += [
        "",
        "[profile]",
        f"power_pre = {LOAD_PRE!r}",
        f"power_post = {LOAD_POST!r}",
        f"t_step = {T_STEP!r}",
        "",
        "[sim]",
        f"t_end = {t_end!r}",
        f"h = {h!r}",
        f"sample_stride = {sample_stride}",
        "",
        "[fit]",
        f"algorithm = {algorithm}",
        "",
        "[seed]",
        f"value = {seed}",
        "",
    ]
    return "\n".join(lines)
