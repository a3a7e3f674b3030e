"""Experiment orchestration: problem setup, step tuning, sweeps, rate fits and artifacts."""

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import certificates, fixtures, kernels
from .graph import MixingOperator, generate_erdos_renyi, metropolis_weights
from .objective import generate_sensing_instance
from .records import RunRecord, atomic_write, emit_csv
from .solvers import (
    CONSTANT_STEP_METHODS,
    TRACKING_METHODS,
    SolverConfig,
    METHODS,
    DIVERGENCE_THRESHOLD,
    SolverDiverged,
    init_state,
    make_stepper,
    run,
)
from .stepsize import bb_bounds_mask

log = logging.getLogger(__name__)

REL_ERR_FLOOR = 1e-12
TUNE_TARGET = 1e-6
TUNE_MAX_ITER = 10_000
PERTURB_RANGE = (0.6, 1.2)


# ---------------------------------------------------------------------------
# problem construction


def derive_seeds(seed):
    """Independent integer seeds for graph, instance and step perturbation."""
    children = np.random.SeedSequence(seed).spawn(3)
    g, i, s = (int(c.generate_state(1)[0]) for c in children)
    return {"graph": g, "instance": i, "perturb": s}


@dataclass
class ProblemSpec:
    n: int = 200
    m: int = 20
    p: int = 10
    L: float = 1.0
    mu: float = 0.5
    noise_scale: float = 0.01
    r_c: float = 0.1
    # optional JSON fixtures that replace the generated pieces
    instance_file: str = None
    graph_file: str = None
    weights_file: str = None


@dataclass
class Problem:
    objective: object
    graph: object
    weights: object
    seeds: dict

    @property
    def delta(self):
        return self.weights.delta


def build_problem(spec, seed):
    seeds = derive_seeds(seed)
    if spec.instance_file:
        inst = fixtures.load_instance(spec.instance_file)
    else:
        inst = generate_sensing_instance(
            spec.n, spec.m, spec.p, spec.L, spec.mu, spec.noise_scale, seeds["instance"]
        )
    if spec.graph_file:
        graph = fixtures.load_graph(spec.graph_file)
    else:
        graph = generate_erdos_renyi(inst.n, spec.r_c, seeds["graph"])
    if spec.weights_file:
        weights = fixtures.load_weights(spec.weights_file)
    else:
        weights = metropolis_weights(graph)
    if graph.n != inst.n or weights.n != inst.n:
        raise ValueError(f"agent counts disagree: instance {inst.n}, graph {graph.n}, weights {weights.n}")
    return Problem(inst, graph, weights, seeds)


def perturbed_steps(alpha, n, seed, low=PERTURB_RANGE[0], high=PERTURB_RANGE[1]):
    """Uncoordinated steps ``alpha * u_i`` with ``u_i ~ U(low, high)``."""
    rng = np.random.default_rng(seed)
    return alpha * rng.uniform(low, high, n)


def certified_R(objective, delta):
    _, R_min = certificates.select_c(objective.L, objective.mu, objective.n, delta)
    return R_min


# ---------------------------------------------------------------------------
# step tuning


@dataclass
class TuneResult:
    alpha: float
    iterations: int  # None when no grid point reached the target
    converged: bool
    table: list = field(default_factory=list)  # (alpha, iterations or None, final rel_err)


def default_grid(L, points=20):
    return np.geomspace(0.01 / L, 2.0 / L, points)


def tune_constant_step(method, objective, W, grid=None, target=TUNE_TARGET, max_iter=TUNE_MAX_ITER, R=1,
                       stall_window=500):
    """Grid search for the constant step minimising iterations to ``target``.

    All grid points advance in lock-step, so the search stops as soon as
    the fastest step reaches ``target``; among steps reaching it in the same
    iteration the smallest wins. A candidate is dropped when it diverges or
    when its error shrank by less than 0.1% over the last ``stall_window``
    iterations (it has settled at its steady state). When no grid point
    reaches ``target`` the step with the smallest final error is returned
    with ``converged=False``.
    """
    if method not in CONSTANT_STEP_METHODS:
        raise ValueError(f"{method} does not use a constant step")
    grid = default_grid(objective.L) if grid is None else np.sort(np.asarray(grid, float))
    if grid.size == 0:
        raise ValueError("empty step grid")
    op = MixingOperator.wrap(W)
    x_star = objective.x_star
    live = {}
    for a in grid:
        cfg = SolverConfig(method, R=R, alpha=float(a))
        st = init_state(objective, None, cfg.alpha)
        e0 = float(np.linalg.norm(st.X - x_star))
        live[float(a)] = [make_stepper(cfg), st, e0, [1.0]]
    final = {a: 1.0 for a in live}
    k = 0
    hits = []
    while live and k < max_iter and not hits:
        k += 1
        for a in list(live):
            step, st, e0, hist = live[a]
            st = step(st, objective, op)
            rel = float(np.linalg.norm(st.X - x_star)) / e0 if e0 > 0 else 0.0
            live[a][1] = st
            final[a] = rel if math.isfinite(rel) else math.inf
            if not math.isfinite(rel) or rel > DIVERGENCE_THRESHOLD:
                final[a] = math.inf
                del live[a]
            elif rel <= target:
                hits.append(a)
            else:
                hist.append(rel)
                if len(hist) > stall_window and rel > 0.999 * hist[-stall_window - 1]:
                    del live[a]
    table = [(a, k if a in hits else None, final[a]) for a in map(float, grid)]
    if hits:
        return TuneResult(min(hits), k, True, table)
    best = min(final, key=lambda a: (final[a], a))
    return TuneResult(best, None, False, table)


# ---------------------------------------------------------------------------
# summaries and checks


def rate_fit(record, window=None, floor=REL_ERR_FLOOR, min_points=10):
    """Per-iteration contraction factor ``exp(slope)`` of ``log rel_err``.

    Fits a least-squares line through the last ``window`` points (default:
    the final 60% of the iterations before ``rel_err`` first reaches
    ``floor``).
    """
    e = np.asarray(record.rel_err if isinstance(record, RunRecord) else record, float)
    hit = np.flatnonzero(e <= floor)
    stop = int(hit[0]) if hit.size else e.size
    e = e[:stop]
    if window is None:
        window = int(math.ceil(0.6 * e.size))
    if window < min_points or e.size < min_points:
        raise ValueError(f"rate fit needs at least {min_points} points, got {min(window, e.size)}")
    tail = e[-window:]
    if np.any(tail <= 0):
        raise ValueError("rel_err must be positive inside the fit window")
    k = np.arange(tail.size, dtype=float)
    slope = np.polyfit(k, np.log(tail), 1)[0]
    return float(math.exp(slope))


def check_invariants(record, objective, tol_alpha=1e-9, tol_track=1e-10, tol_v=1e-8, converged_below=1e-10):
    """Named pass/fail flags for the run invariants that apply to ``record.method``."""
    checks = {}
    cols = record.columns
    checks["counters_monotone"] = bool(
        np.all(np.diff(cols["grad_evals"]) >= 0) and np.all(np.diff(cols["comm_rounds"]) >= 0)
    )
    checks["rel_err_starts_at_one"] = len(record) > 0 and cols["rel_err"][0] in (1.0, 0.0)
    if record.method in TRACKING_METHODS:
        checks["gradient_tracking"] = bool(max(record.tracking_residual) <= tol_track)
    if record.method == "dgm-bb-c":
        ok = True
        for a, src in zip(record.alphas, record.alpha_sources):
            emitted = src == kernels.ALPHA_BB
            if emitted.any() and not bb_bounds_mask(a[emitted], objective.L, objective.mu, tol_alpha).all():
                ok = False
                break
        checks["bb_bounds"] = ok
        if cols["rel_err"][-1] <= converged_below:
            v = [cols["v1"][-1], cols["v2"][-1], cols["v3"][-1]]
            checks["residual_triple_small"] = bool(max(v) < tol_v)
    return checks


def mean_step_bound_violations(record, L, mu):
    """Rows whose mean step exceeds ``2/L - mu/L^2`` (flagged, never enforced)."""
    bound = 2.0 / L - mu / L**2
    return int(np.sum(record.array("mean_alpha")[1:] > bound))


def summarize(record, objective, targets=(1e-6, 1e-8, 1e-10)):
    s = {
        "method": record.method,
        "iterations": record.iterations,
        "final_rel_err": record.columns["rel_err"][-1] if len(record) else None,
        "converged": record.converged,
        "aborted": record.aborted,
        "meta": record.meta,
    }
    for t in targets:
        key = f"{t:.0e}"
        s[f"to_{key}"] = {
            "iterations": record.first_hit(t),
            "grad_evals": record.first_hit(t, "grad_evals"),
            "comm_rounds": record.first_hit(t, "comm_rounds"),
            "cost": record.first_hit(t, "cost"),
        }
    if record.method == "dgm-bb-c":
        a_max, abar_max = record.alpha_stats(bb_only=True)
    else:
        a_max, abar_max = record.alpha_stats(bb_only=False)
    s["alpha_max"] = a_max
    s["mean_alpha_max"] = abar_max
    s["mean_step_violations"] = mean_step_bound_violations(record, objective.L, objective.mu)
    s["max_tracking_residual"] = max(record.tracking_residual) if record.tracking_residual else None
    s["invariants"] = check_invariants(record, objective)
    return s


def jsonable(o):
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def emit_summary(summary, path):
    atomic_write(path, json.dumps(jsonable(summary), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# plans


@dataclass
class MethodSpec:
    """One cell of a plan. ``R``/``alpha`` may be ``"auto"``/``"tune"``."""

    method: str
    R: object = 1
    bb: str = "short"
    alpha0: float = 1.4
    alpha: object = "tune"
    label: str = None

    @property
    def name(self):
        return self.label or self.method


@dataclass
class ExperimentPlan:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    methods: list = field(default_factory=list)
    seed: int = 0
    max_iter: int = 2000
    target: float = REL_ERR_FLOOR
    c_c: float = 1.0
    c_g: float = 1.0
    output_dir: str = None
    sweep_axis: str = None  # "alpha0" or "R"
    sweep_values: list = field(default_factory=list)

    def validate(self):
        if not self.methods:
            raise ValueError("an experiment plan needs at least one method")
        if self.sweep_axis not in (None, "alpha0", "R"):
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")
        labels = [m.name for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate run labels in {labels}")
        for m in self.methods:
            if m.method not in METHODS:
                raise ValueError(f"unknown method {m.method!r}")
            if m.bb not in ("short", "long"):
                raise ValueError(f"{m.name}: bb must be 'short' or 'long', got {m.bb!r}")
            if m.R != "auto" and int(m.R) < 1:
                raise ValueError(f"{m.name}: R must be a positive integer or 'auto'")


@dataclass
class ExperimentResult:
    records: dict
    summary: dict
    problem: Problem
    ok: bool


def resolve_config(spec, problem, plan, tuned_cache=None):
    """Turn a :class:`MethodSpec` into a concrete :class:`SolverConfig`."""
    obj = problem.objective
    R = spec.R
    if R == "auto":
        R = certified_R(obj, problem.delta)
    R = int(R)
    info = {"R": R}
    alpha = spec.alpha
    if spec.method in CONSTANT_STEP_METHODS:
        if alpha == "tune":
            # ATC-DIGing and DGM-C share one tuned identical step, then perturb it
            base = "atc-diging" if spec.method in ("atc-diging", "dgm-c") else spec.method
            cache = {} if tuned_cache is None else tuned_cache
            if base not in cache:
                cache[base] = tune_constant_step(base, obj, problem.weights.W)
            tuned = cache[base]
            info["tuned_alpha"] = tuned.alpha
            info["tuned_converged"] = tuned.converged
            alpha = tuned.alpha
            if spec.method in ("atc-diging", "dgm-c"):
                alpha = perturbed_steps(alpha, obj.n, problem.seeds["perturb"])
        alpha = np.asarray(alpha, dtype=float) if np.ndim(alpha) else float(alpha)
    cfg = SolverConfig(
        method=spec.method,
        R=R,
        bb=spec.bb,
        alpha0=spec.alpha0,
        alpha=alpha if spec.method in CONSTANT_STEP_METHODS else None,
        max_iter=plan.max_iter,
        target=plan.target,
    )
    return cfg, info


def _certificate_snapshot(record, problem, R):
    obj = problem.objective
    a_max, abar_max = record.alpha_stats(bb_only=True)
    if not math.isfinite(a_max):
        a_max = None
    cert = certificates.certify(
        obj.L, obj.mu, obj.n, problem.delta, R, alpha_max=a_max, mean_alpha_max=abar_max
    )
    return cert.to_dict()


def execute(spec, cfg, problem, plan, info):
    """Run one configured cell, preserving the partial record on divergence."""
    try:
        record = run(cfg, problem.objective, problem.weights.W, c_c=plan.c_c, c_g=plan.c_g)
    except SolverDiverged as exc:
        record = exc.record
    record.meta.update(info)
    record.meta["label"] = spec.name
    record.meta["seeds"] = problem.seeds
    record.meta["graph"] = {
        "n": problem.graph.n,
        "edges": len(problem.graph.edges),
        "mean_degree": float(problem.graph.degrees.mean()),
        "delta": problem.delta,
    }
    if cfg.method == "dgm-bb-c" and len(record) > 2:
        record.meta["certificate"] = _certificate_snapshot(record, problem, cfg.R)
    return record


def _expand(plan):
    if plan.sweep_axis is None:
        return [(m, m.name) for m in plan.methods]
    cells = []
    for m in plan.methods:
        for v in plan.sweep_values:
            if plan.sweep_axis == "alpha0":
                cell = MethodSpec(m.method, m.R, m.bb, float(v), m.alpha, f"{m.name}-alpha0={v:g}")
            else:
                cell = MethodSpec(m.method, int(v), m.bb, m.alpha0, m.alpha, f"{m.name}-R={int(v)}")
            cells.append((cell, cell.name))
    return cells


def run_experiment(plan, problem=None):
    """Execute every cell of ``plan``; write per-run CSVs and ``summary.json``.

    Returns an :class:`ExperimentResult`; ``ok`` is true iff every run
    finished without divergence and all its invariant checks held.
    """
    plan.validate()
    problem = problem or build_problem(plan.problem, plan.seed)
    tuned = {}
    records = {}
    summary = {
        "schema": "dgmbb.summary/1",
        "seed": plan.seed,
        "problem": vars(plan.problem),
        "delta": problem.delta,
        "backend": kernels.backend_name(),
        "runs": {},
    }
    ok = True
    for spec, name in _expand(plan):
        cfg, info = resolve_config(spec, problem, plan, tuned)
        record = execute(spec, cfg, problem, plan, info)
        records[name] = record
        if plan.output_dir:
            emit_csv(record, os.path.join(plan.output_dir, f"{_safe(name)}.csv"))
        s = summarize(record, problem.objective)
        summary["runs"][name] = s
        ok = ok and record.aborted is None and all(s["invariants"].values())
    if plan.sweep_axis is not None:
        summary["sweep"] = sweep_report(records, plan.sweep_axis)
    if plan.output_dir:
        emit_summary(summary, os.path.join(plan.output_dir, "summary.json"))
    summary["ok"] = ok
    return ExperimentResult(records, summary, problem, ok)


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in name)


# ---------------------------------------------------------------------------
# sweeps


def iteration_spread(counts):
    """``max / min`` of iteration counts (``inf`` if any run missed the target)."""
    if any(c is None for c in counts):
        return math.inf
    return max(counts) / min(counts)


def sweep_report(records, axis, target=1e-8):
    counts = {name: r.first_hit(target) for name, r in records.items()}
    rep = {"axis": axis, "target": target, "iterations": counts}
    rep["spread"] = iteration_spread(list(counts.values()))
    if axis == "R":
        rep["cost"] = {name: r.first_hit(target, "cost") for name, r in records.items()}
        certs = [r.meta.get("certificate") for r in records.values() if r.meta.get("certificate")]
        if certs:
            rep["R_min"] = certs[0]["R_min"]
    return rep


def sweep_alpha0(objective, W, alpha0s, R, bb="short", max_iter=2000, target=REL_ERR_FLOOR):
    """DGM-BB-C runs over initial steps; returns ``{alpha0: RunRecord}``."""
    out = {}
    for a0 in alpha0s:
        cfg = SolverConfig("dgm-bb-c", R=R, bb=bb, alpha0=float(a0), max_iter=max_iter, target=target)
        out[float(a0)] = _run_or_partial(cfg, objective, W)
    return out


def sweep_inner_loops(objective, W, Rs, alpha0=1.4, bb="short", max_iter=2000, target=REL_ERR_FLOOR):
    """DGM-BB-C runs over inner consensus counts; returns ``{R: RunRecord}``."""
    out = {}
    for R in Rs:
        cfg = SolverConfig("dgm-bb-c", R=int(R), bb=bb, alpha0=alpha0, max_iter=max_iter, target=target)
        out[int(R)] = _run_or_partial(cfg, objective, W)
    return out


def _run_or_partial(cfg, objective, W):
    try:
        return run(cfg, objective, W)
    except SolverDiverged as exc:
        return exc.record
