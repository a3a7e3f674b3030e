"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 200] [--rc 0.1] [--repeat 200]

Prints per-call microseconds for each kernel pair and the wall time of a
full DGM-BB-C run under each backend (the backend is fixed at import time,
so each full run happens in a subprocess with ``DGMBB_DISABLE_NUMBA`` set
accordingly). Both paths are checked to agree before timing.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dgmbb import kernels
from dgmbb.graph import MixingOperator, generate_erdos_renyi, metropolis_weights
from dgmbb.objective import generate_sensing_instance

FULL_RUN = """
import time
from dgmbb.graph import generate_erdos_renyi, metropolis_weights
from dgmbb.objective import generate_sensing_instance
from dgmbb.solvers import SolverConfig, run
g = generate_erdos_renyi({n}, {rc}, 1)
W = metropolis_weights(g).W
inst = generate_sensing_instance({n}, 20, 10, seed=2)
cfg = SolverConfig("dgm-bb-c", R=4, alpha0=1.4, max_iter=300, target=0.0)
run(cfg, inst, W)  # warm-up, includes JIT compilation
t = time.perf_counter()
run(cfg, inst, W)
print(time.perf_counter() - t)
"""


def per_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--rc", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if not kernels.NUMBA_AVAILABLE:
        sys.exit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    g = generate_erdos_renyi(args.n, args.rc, 1)
    op = MixingOperator(metropolis_weights(g).W)
    inst = generate_sensing_instance(args.n, 20, 10, seed=2)
    M, y = inst.M, inst.y
    X = rng.standard_normal((args.n, 10))
    Xp = X + 1e-2 * rng.standard_normal(X.shape)
    G = kernels.lsq_gradients_np(M, y, X)
    Gp = kernels.lsq_gradients_np(M, y, Xp)
    a = np.ones(args.n)
    xs = inst.x_star

    pairs = {
        "mix R=4": (
            lambda: kernels.mix_csr_nb(op.indptr, op.indices, op.data, X, 4),
            lambda: kernels.mix_dense_np(op.dense, X, 4),
        ),
        "lsq_gradients": (lambda: kernels.lsq_gradients_nb(M, y, X), lambda: kernels.lsq_gradients_np(M, y, X)),
        "bb_steps": (
            lambda: kernels.bb_steps_nb(X, Xp, G, Gp, a, True, 1.0, 1e-13),
            lambda: kernels.bb_steps_np(X, Xp, G, Gp, a, True, 1.0, 1e-13),
        ),
        "state_metrics": (
            lambda: kernels.state_metrics_nb(X, X, G, xs),
            lambda: kernels.state_metrics_np(X, X, G, xs),
        ),
    }
    print(f"n={args.n} r_c={args.rc} nnz(W)={op.data.size}")
    print(f"{'kernel':<16}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, (f_nb, f_np) in pairs.items():
        r_nb, r_np = f_nb(), f_np()
        for u, v in zip(np.atleast_1d(r_nb) if not isinstance(r_nb, tuple) else r_nb,
                        np.atleast_1d(r_np) if not isinstance(r_np, tuple) else r_np):
            if not np.allclose(u, v, rtol=1e-12, atol=1e-12):
                sys.exit(f"{name}: numba and numpy paths disagree")
        t_nb, t_np = per_call(f_nb, args.repeat), per_call(f_np, args.repeat)
        print(f"{name:<16}{t_nb:>12.1f}{t_np:>12.1f}{t_np / t_nb:>10.2f}")

    print("\nfull DGM-BB-C run, 300 iterations, R=4")
    code = FULL_RUN.format(n=args.n, rc=args.rc)
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, DGMBB_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        print(f"  {label:<6} {float(out.stdout.strip()):.3f} s")


if __name__ == "__main__":
    main()
