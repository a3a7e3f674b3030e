"""Versioned INI experiment configuration.

Example::

    [meta]
    schema_version = 1

    [problem]
    n = 200
    m = 20
    p = 10
    L = 1.0
    mu = 0.5
    noise_scale = 0.01
    r_c = 0.1
    # instance_file = fixtures/instance.json   (optional, also graph_file, weights_file)

    [run]
    seed = 0
    max_iter = 2000
    target = 1e-12
    c_c = 1
    c_g = 1
    output_dir = out

    [sweep]
    axis = alpha0
    values = 0.1, 0.5, 1.0, 1.4, 2.0

    [method.dgm-bb-c]
    R = auto
    bb = short
    alpha0 = 1.4

    [method.extra]
    alpha = tune

Each ``[method.<label>]`` section names one cell; the solver defaults to
the label and can be set explicitly with ``method = ...``. ``R = auto``
uses the certified minimum; ``alpha = tune`` runs the grid search.
Relative fixture paths resolve against the config file's directory.
"""

import configparser
import os

from .harness import ExperimentPlan, MethodSpec, ProblemSpec
from .solvers import METHODS

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_PROBLEM_FIELDS = {
    "n": int,
    "m": int,
    "p": int,
    "L": float,
    "mu": float,
    "noise_scale": float,
    "r_c": float,
}
_FIXTURE_FIELDS = ("instance_file", "graph_file", "weights_file")
_RUN_FIELDS = {"seed": int, "max_iter": int, "target": float, "c_c": float, "c_g": float}


def _parser():
    # keep key case so "L" and "mu" stay distinct and readable
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _num_or(text, keyword, conv):
    text = text.strip()
    return text if text == keyword else conv(text)


def _alpha(text):
    text = text.strip()
    if text == "tune":
        return text
    parts = [float(v) for v in text.replace(",", " ").split()]
    return parts[0] if len(parts) == 1 else parts


def parse_plan(text, base_dir="."):
    """Build an :class:`ExperimentPlan` from INI ``text``."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    version = cp.get("meta", "schema_version", fallback=None)
    if version is None:
        raise ConfigError("missing [meta] schema_version")
    if int(version) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")

    known = {"meta", "problem", "run", "sweep"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("method."):
            raise ConfigError(f"unknown section [{sec}]")

    problem = ProblemSpec()
    if cp.has_section("problem"):
        for key, val in cp.items("problem"):
            if key in _PROBLEM_FIELDS:
                setattr(problem, key, _PROBLEM_FIELDS[key](val))
            elif key in _FIXTURE_FIELDS:
                path = val if os.path.isabs(val) else os.path.join(base_dir, val)
                if not os.path.exists(path):
                    raise ConfigError(f"{key}: fixture {path} not found")
                setattr(problem, key, path)
            else:
                raise ConfigError(f"unknown key {key!r} in [problem]")

    plan = ExperimentPlan(problem=problem)
    if cp.has_section("run"):
        for key, val in cp.items("run"):
            if key in _RUN_FIELDS:
                setattr(plan, key, _RUN_FIELDS[key](val))
            elif key == "output_dir":
                plan.output_dir = val if os.path.isabs(val) else os.path.join(base_dir, val)
            else:
                raise ConfigError(f"unknown key {key!r} in [run]")

    if cp.has_section("sweep"):
        axis = cp.get("sweep", "axis")
        if axis not in ("alpha0", "R"):
            raise ConfigError(f"sweep axis must be alpha0 or R, got {axis!r}")
        conv = float if axis == "alpha0" else int
        plan.sweep_axis = axis
        plan.sweep_values = [conv(v) for v in cp.get("sweep", "values").replace(",", " ").split()]
        if not plan.sweep_values:
            raise ConfigError("sweep needs at least one value")

    for sec in cp.sections():
        if not sec.startswith("method."):
            continue
        label = sec[len("method.") :]
        opts = dict(cp.items(sec))
        method = opts.pop("method", label)
        if method not in METHODS:
            raise ConfigError(f"[{sec}]: unknown method {method!r}")
        spec = MethodSpec(method=method, label=label if label != method else None)
        for key, val in opts.items():
            if key == "R":
                spec.R = _num_or(val, "auto", int)
            elif key == "bb":
                spec.bb = val.strip()
            elif key == "alpha0":
                spec.alpha0 = float(val)
            elif key == "alpha":
                spec.alpha = _alpha(val)
            else:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
        plan.methods.append(spec)
    try:
        plan.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return plan


def load_plan(path):
    with open(path) as fh:
        text = fh.read()
    return parse_plan(text, base_dir=os.path.dirname(os.path.abspath(path)))
