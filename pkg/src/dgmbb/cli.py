"""Command line entry point: ``dgmbb {run,compare,sweep,theory}``.

Exit status: 0 when every run completed and every checked invariant held,
1 when a run diverged or an invariant failed, 2 on usage or config errors.
"""

import argparse
import json
import logging
import math
import sys

from . import certificates, fixtures, harness
from .config import ConfigError, load_plan
from .graph import GraphError
from .objective import ObjectiveError
from .records import atomic_write
from .solvers import METHODS

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEFAULT_COMPARE = ("dgm-bb-c", "dgm-c", "atc-diging", "diging", "extra", "dgd", "near-dgd+")


def _R(text):
    return text if text == "auto" else int(text)


def _alpha(text):
    return text if text == "tune" else float(text)


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _add_problem_args(p):
    g = p.add_argument_group("problem (ignored with --config)")
    g.add_argument("--config", help="INI experiment plan")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--m", type=int, default=20)
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--L", type=float, default=1.0)
    g.add_argument("--mu", type=float, default=0.5)
    g.add_argument("--noise-scale", type=float, default=0.01)
    g.add_argument("--rc", type=float, default=0.1, help="Erdos-Renyi connectivity ratio")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instance", help="instance JSON fixture")
    g.add_argument("--graph", help="graph JSON fixture")
    g.add_argument("--weights", help="weight matrix JSON fixture")


def _add_run_args(p):
    g = p.add_argument_group("run")
    g.add_argument("--max-iter", type=int, default=2000)
    g.add_argument("--target", type=float, default=harness.REL_ERR_FLOOR)
    g.add_argument("--c-c", type=float, default=1.0, help="cost per communication round")
    g.add_argument("--c-g", type=float, default=1.0, help="cost per gradient evaluation")
    g.add_argument("--out", help="directory for per-run CSVs and summary.json")
    g.add_argument("--R", type=_R, default="auto", help="inner consensus rounds or 'auto'")
    g.add_argument("--bb", choices=("short", "long"), default="short")
    g.add_argument("--alpha0", type=float, default=1.4)
    g.add_argument("--alpha", type=_alpha, default="tune", help="constant step or 'tune'")


def build_parser():
    ap = argparse.ArgumentParser(prog="dgmbb", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one method")
    p.add_argument("method", choices=METHODS)
    _add_problem_args(p)
    _add_run_args(p)

    p = sub.add_parser("compare", help="run a method matrix on one problem")
    p.add_argument("--methods", default=",".join(DEFAULT_COMPARE))
    _add_problem_args(p)
    _add_run_args(p)

    p = sub.add_parser("sweep", help="DGM-BB-C over an alpha0 or R axis")
    p.add_argument("--axis", choices=("alpha0", "R"), required=True)
    p.add_argument("--values", required=True, help="comma separated grid")
    _add_problem_args(p)
    _add_run_args(p)

    p = sub.add_parser("theory", help="admissibility certificate only")
    p.add_argument("--delta", type=float, help="spectral gap; generated from the problem if omitted")
    p.add_argument("--alpha-max", type=float, help="largest step (default 1/mu)")
    p.add_argument("--c", type=_floats, help="weight vector c1,c2,c3 (default: optimised)")
    p.add_argument("--json", dest="json_out", help="write the certificate here")
    _add_problem_args(p)
    p.add_argument("--R", type=_R, default="auto")
    return ap


def _problem_spec(args):
    return harness.ProblemSpec(
        n=args.n,
        m=args.m,
        p=args.p,
        L=args.L,
        mu=args.mu,
        noise_scale=args.noise_scale,
        r_c=args.rc,
        instance_file=args.instance,
        graph_file=args.graph,
        weights_file=args.weights,
    )


def _plan_from_args(args, methods):
    specs = [
        harness.MethodSpec(m, R=args.R if m in ("dgm-bb-c", "dgm-c") else 1, bb=args.bb, alpha0=args.alpha0, alpha=args.alpha)
        for m in methods
    ]
    return harness.ExperimentPlan(
        problem=_problem_spec(args),
        methods=specs,
        seed=args.seed,
        max_iter=args.max_iter,
        target=args.target,
        c_c=args.c_c,
        c_g=args.c_g,
        output_dir=args.out,
    )


def _print_table(summary, out):
    cols = ("run", "iters", "rel_err", "it@1e-6", "cost@1e-6", "it@1e-8", "cost@1e-8", "alpha_max", "ok")
    rows = []
    for name, s in summary["runs"].items():
        rows.append(
            (
                name,
                str(s["iterations"]),
                f"{s['final_rel_err']:.3e}" if s["final_rel_err"] is not None else "-",
                _cell(s["to_1e-06"]["iterations"]),
                _cell(s["to_1e-06"]["cost"]),
                _cell(s["to_1e-08"]["iterations"]),
                _cell(s["to_1e-08"]["cost"]),
                f"{s['alpha_max']:.4f}" if math.isfinite(s["alpha_max"]) else "-",
                "yes" if s["aborted"] is None and all(s["invariants"].values()) else "NO",
            )
        )
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)), file=out)
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)), file=out)
    if "sweep" in summary:
        sw = summary["sweep"]
        print(f"sweep over {sw['axis']}: iteration spread to {sw['target']:g} = {sw['spread']:.3f}", file=out)


def _cell(v):
    if v is None:
        return "-"
    return f"{v:g}" if isinstance(v, float) else str(v)


def cmd_experiment(args, out):
    if args.config:
        plan = load_plan(args.config)
        if args.command == "run":
            plan.methods = [m for m in plan.methods if m.method == args.method] or [
                harness.MethodSpec(args.method, R=args.R)
            ]
    else:
        if args.command == "run":
            methods = [args.method]
        elif args.command == "compare":
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            bad = [m for m in methods if m not in METHODS]
            if bad:
                raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        else:
            methods = ["dgm-bb-c"]
        plan = _plan_from_args(args, methods)
    if args.command == "sweep":
        plan.sweep_axis = args.axis
        conv = float if args.axis == "alpha0" else int
        plan.sweep_values = [conv(v) for v in _floats(args.values)]
        plan.methods = [m for m in plan.methods if m.method == "dgm-bb-c"] or [harness.MethodSpec("dgm-bb-c")]
    result = harness.run_experiment(plan)
    print(f"delta = {result.problem.delta:.6f}  backend = {result.summary['backend']}", file=out)
    _print_table(result.summary, out)
    return EXIT_OK if result.ok else EXIT_FAILED


def cmd_theory(args, out):
    if args.delta is not None:
        if args.instance:
            obj = fixtures.load_instance(args.instance)
            L, mu, n = obj.L, obj.mu, obj.n
        else:
            L, mu, n = args.L, args.mu, args.n
        delta = args.delta
    else:
        spec = _problem_spec(args)
        if args.config:
            spec = load_plan(args.config).problem
        pb = harness.build_problem(spec, args.seed)
        L, mu, n, delta = pb.objective.L, pb.objective.mu, pb.objective.n, pb.delta
    c = args.c
    if c is None:
        c, _ = certificates.select_c(L, mu, n, delta)
    R = args.R
    if R == "auto":
        R = certificates.min_inner_loops(certificates.delta_bound(c, L, mu, n), delta)
    cert = certificates.certify(L, mu, n, delta, R, alpha_max=args.alpha_max, c=c)
    d = cert.to_dict()
    text = json.dumps(harness.jsonable(d), indent=2, sort_keys=True)
    print(text, file=out)
    if args.json_out:
        atomic_write(args.json_out, text + "\n")
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "theory":
            return cmd_theory(args, out)
        return cmd_experiment(args, out)
    except (ConfigError, GraphError, ObjectiveError, certificates.CertificateError, ValueError, OSError) as exc:
        print(f"dgmbb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
