"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``DGMBB_DISABLE_NUMBA`` is unset (or ``0``). Both paths are always
importable by name (``*_nb`` / ``*_np``) so the benchmark and the
equivalence tests can exercise them side by side.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("DGMBB_DISABLE_NUMBA", "0") in ("", "0")

# alpha source codes emitted by the BB kernel
ALPHA_INITIAL = 0
ALPHA_BB = 1
ALPHA_REUSED = 2
ALPHA_FALLBACK = 3


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# consensus sweeps: V <- W V, repeated R times


@njit(cache=True)
def mix_csr_nb(indptr, indices, data, V, R):
    n, p = V.shape
    cur = V.copy()
    nxt = np.empty_like(cur)
    for _ in range(R):
        for i in range(n):
            for c in range(p):
                nxt[i, c] = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                w = data[k]
                for c in range(p):
                    nxt[i, c] += w * cur[j, c]
        cur, nxt = nxt, cur
    return cur


def mix_dense_np(W, V, R):
    out = np.array(V, dtype=np.float64, copy=True)
    for _ in range(R):
        out = W @ out
    return out


# --------------------------------------------------------------------------
# stacked least-squares gradients: G[i] = M_i^T (M_i x_i - y_i)


@njit(cache=True)
def lsq_gradients_nb(M, y, X):
    n, m, p = M.shape
    G = np.zeros((n, p))
    r = np.empty(m)
    for i in range(n):
        for a in range(m):
            acc = -y[i, a]
            for c in range(p):
                acc += M[i, a, c] * X[i, c]
            r[a] = acc
        for a in range(m):
            ra = r[a]
            for c in range(p):
                G[i, c] += M[i, a, c] * ra
    return G


def lsq_gradients_np(M, y, X):
    resid = np.einsum("imp,ip->im", M, X) - y
    return np.einsum("imp,im->ip", M, resid)


# --------------------------------------------------------------------------
# per-agent Barzilai-Borwein steps


@njit(cache=True)
def bb_steps_nb(X, X_prev, G, G_prev, prev_alpha, short, fallback, s_tol):
    n, p = X.shape
    alpha = np.empty(n)
    source = np.empty(n, dtype=np.int64)
    for i in range(n):
        ss = 0.0
        sz = 0.0
        zz = 0.0
        xx = 0.0
        for c in range(p):
            s = X[i, c] - X_prev[i, c]
            z = G[i, c] - G_prev[i, c]
            ss += s * s
            sz += s * z
            zz += z * z
            xx += X[i, c] * X[i, c]
        scale = max(1.0, np.sqrt(xx))
        if np.sqrt(ss) <= s_tol * scale:
            alpha[i] = prev_alpha[i]
            source[i] = ALPHA_REUSED
        elif sz <= 0.0:
            alpha[i] = fallback
            source[i] = ALPHA_FALLBACK
        elif short:
            alpha[i] = sz / zz
            source[i] = ALPHA_BB
        else:
            alpha[i] = ss / sz
            source[i] = ALPHA_BB
    return alpha, source


def bb_steps_np(X, X_prev, G, G_prev, prev_alpha, short, fallback, s_tol):
    S = X - X_prev
    Z = G - G_prev
    ss = np.einsum("ij,ij->i", S, S)
    sz = np.einsum("ij,ij->i", S, Z)
    zz = np.einsum("ij,ij->i", Z, Z)
    scale = np.maximum(1.0, np.sqrt(np.einsum("ij,ij->i", X, X)))
    stalled = np.sqrt(ss) <= s_tol * scale
    bad = ~stalled & (sz <= 0.0)
    ok = ~stalled & ~bad
    alpha = np.empty(X.shape[0])
    source = np.empty(X.shape[0], dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = sz / zz if short else ss / sz
    alpha[ok] = raw[ok]
    source[ok] = ALPHA_BB
    alpha[stalled] = prev_alpha[stalled]
    source[stalled] = ALPHA_REUSED
    alpha[bad] = fallback
    source[bad] = ALPHA_FALLBACK
    return alpha, source


# --------------------------------------------------------------------------
# per-iteration metrics in one pass
#   returns (||X - X*||, ||X - 1 xbar||, ||Y - 1 ybar||, ||xbar - x*||, ||ybar - gbar||)


@njit(cache=True)
def state_metrics_nb(X, Y, G, x_star):
    n, p = X.shape
    xbar = np.zeros(p)
    ybar = np.zeros(p)
    gbar = np.zeros(p)
    err = 0.0
    for i in range(n):
        for c in range(p):
            xbar[c] += X[i, c]
            ybar[c] += Y[i, c]
            gbar[c] += G[i, c]
            d = X[i, c] - x_star[c]
            err += d * d
    for c in range(p):
        xbar[c] /= n
        ybar[c] /= n
        gbar[c] /= n
    v1 = 0.0
    v2 = 0.0
    for i in range(n):
        for c in range(p):
            dx = X[i, c] - xbar[c]
            dy = Y[i, c] - ybar[c]
            v1 += dx * dx
            v2 += dy * dy
    v3 = 0.0
    tr = 0.0
    for c in range(p):
        d = xbar[c] - x_star[c]
        v3 += d * d
        t = ybar[c] - gbar[c]
        tr += t * t
    return np.sqrt(err), np.sqrt(v1), np.sqrt(v2), np.sqrt(v3), np.sqrt(tr)


def state_metrics_np(X, Y, G, x_star):
    xbar = X.mean(axis=0)
    ybar = Y.mean(axis=0)
    gbar = G.mean(axis=0)
    return (
        float(np.linalg.norm(X - x_star)),
        float(np.linalg.norm(X - xbar)),
        float(np.linalg.norm(Y - ybar)),
        float(np.linalg.norm(xbar - x_star)),
        float(np.linalg.norm(ybar - gbar)),
    )


# --------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    lsq_gradients = lsq_gradients_nb
    bb_steps = bb_steps_nb
    state_metrics = state_metrics_nb
else:
    lsq_gradients = lsq_gradients_np
    bb_steps = bb_steps_np
    state_metrics = state_metrics_np


def mix(op, V, R):
    """Apply ``R`` consensus sweeps of the mixing operator ``op`` to ``V``."""
    if R == 0:
        return np.array(V, dtype=np.float64, copy=True)
    V = np.ascontiguousarray(V, dtype=np.float64)
    if USE_NUMBA:
        return mix_csr_nb(op.indptr, op.indices, op.data, V, R)
    return mix_dense_np(op.dense, V, R)
