"""Synchronous, lock-step simulation of distributed gradient methods.

Agents' iterates are stacked row-wise into ``n x p`` matrices and one
communication round is one multiplication by the mixing matrix ``W``.
Every stepper takes a :class:`SolverState` and returns a fresh one.

Per-iteration communication rounds: DGM-BB-C / DGM-C ``2R``,
ATC-DIGing / DIGing 2, EXTRA / DGD 1, NEAR-DGD+ ``k`` at outer iteration
``k``. Every stepper evaluates ``n`` local gradients per iteration, plus
``n`` at initialisation.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import MixingOperator
from .records import RunRecord

log = logging.getLogger(__name__)

METHODS = ("dgm-bb-c", "dgm-c", "atc-diging", "diging", "extra", "dgd", "near-dgd+")
TRACKING_METHODS = ("dgm-bb-c", "dgm-c", "atc-diging", "diging")
CONSTANT_STEP_METHODS = ("dgm-c", "atc-diging", "diging", "extra", "dgd", "near-dgd+")

DIVERGENCE_THRESHOLD = 1e6
# an agent whose iterate moved less than this (relative) keeps its previous BB step
STALL_TOL = 1e-13


class SolverDiverged(RuntimeError):
    def __init__(self, msg, record):
        super().__init__(msg)
        self.record = record


@dataclass(frozen=True)
class SolverState:
    X: np.ndarray
    Y: np.ndarray  # tracker, or the local gradients for non-tracking methods
    G: np.ndarray  # local gradients at X
    X_prev: np.ndarray
    G_prev: np.ndarray
    alphas: np.ndarray  # steps applied in the iteration that produced X
    alpha_source: np.ndarray
    k: int = 0
    comms: int = 0
    grad_evals: int = 0
    WX_prev: np.ndarray = None  # EXTRA keeps W x_{k-1}

    @property
    def n(self):
        return self.X.shape[0]


@dataclass
class SolverConfig:
    """Method selection and parameters.

    ``alpha0`` is the initial BB step (DGM-BB-C); ``alpha`` is the constant
    step of every other method, scalar or one value per agent.
    """

    method: str = "dgm-bb-c"
    R: int = 1
    bb: str = "short"
    alpha0: object = 1.0
    alpha: object = None
    max_iter: int = 1000
    target: float = 1e-12
    stall_tol: float = STALL_TOL

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if int(self.R) < 1:
            raise ValueError("R must be a positive integer")
        self.R = int(self.R)
        if self.bb not in ("long", "short"):
            raise ValueError("bb must be 'long' or 'short'")
        if self.method in CONSTANT_STEP_METHODS:
            if self.alpha is None:
                raise ValueError(f"{self.method} needs a constant step size 'alpha'")
            if np.any(np.asarray(self.alpha, float) <= 0):
                raise ValueError("step sizes must be positive")
        elif np.any(np.asarray(self.alpha0, float) <= 0):
            raise ValueError("alpha0 must be positive")


def _steps(alpha, n):
    a = np.asarray(alpha, dtype=np.float64)
    return np.full(n, float(a)) if a.ndim == 0 else a.astype(np.float64).copy()


def consensus_sweep(V, W, R):
    """Return ``W^R V`` as ``R`` successive multiplications by ``W``."""
    return kernels.mix(MixingOperator.wrap(W), V, int(R))


def init_state(objective, X0=None, alphas=1.0):
    n, p = objective.n, objective.p
    X0 = np.zeros((n, p)) if X0 is None else np.array(X0, dtype=np.float64).reshape(n, p)
    G0 = objective.gradients(X0)
    return SolverState(
        X=X0,
        Y=G0.copy(),
        G=G0,
        X_prev=X0.copy(),
        G_prev=G0.copy(),
        alphas=_steps(alphas, n),
        alpha_source=np.full(n, kernels.ALPHA_INITIAL, dtype=np.int64),
        grad_evals=n,
    )


def _tracking_step(state, objective, op, R, alpha, source):
    X_new = kernels.mix(op, state.X - alpha[:, None] * state.Y, R)
    G_new = objective.gradients(X_new)
    Y_new = kernels.mix(op, state.Y + G_new - state.G, R)
    return SolverState(
        X=X_new,
        Y=Y_new,
        G=G_new,
        X_prev=state.X,
        G_prev=state.G,
        alphas=alpha,
        alpha_source=source,
        k=state.k + 1,
        comms=state.comms + 2 * R,
        grad_evals=state.grad_evals + state.n,
    )


def bb_alphas(state, objective, bb_variant="short", stall_tol=STALL_TOL):
    """Per-agent BB steps for the current iteration of ``state``."""
    if state.k == 0:
        return state.alphas.copy(), np.full(state.n, kernels.ALPHA_INITIAL, dtype=np.int64)
    # once an agent has nearly stopped moving, G - G_prev loses most of its
    # digits to cancellation; use the objective's direct form when it has one
    Z = objective.gradient_differences(state.X - state.X_prev)
    G, G_prev = (state.G, state.G_prev) if Z is None else (Z, np.zeros_like(Z))
    alpha, source = kernels.bb_steps(
        state.X,
        state.X_prev,
        G,
        G_prev,
        state.alphas,
        bb_variant == "short",
        1.0 / objective.L,
        stall_tol,
    )
    bad = np.flatnonzero(source == kernels.ALPHA_FALLBACK)
    if bad.size:
        log.warning("non-positive curvature s'z at iteration %d for agents %s; using 1/L", state.k, bad.tolist())
    return alpha, source


def dgm_bb_c_step(state, objective, W, R, bb_variant="short", stall_tol=STALL_TOL):
    op = MixingOperator.wrap(W)
    alpha, source = bb_alphas(state, objective, bb_variant, stall_tol)
    return _tracking_step(state, objective, op, int(R), alpha, source)


def dgm_c_step(state, objective, W, R, alphas=None):
    """DGM-BB-C with fixed per-agent steps (``state.alphas`` unless given)."""
    op = MixingOperator.wrap(W)
    alpha = state.alphas.copy() if alphas is None else _steps(alphas, state.n)
    return _tracking_step(state, objective, op, int(R), alpha, np.full(state.n, kernels.ALPHA_INITIAL))


def atc_diging_step(state, objective, W, alphas=None):
    return dgm_c_step(state, objective, W, 1, alphas)


def diging_step(state, objective, W, alpha=None):
    """Combine-then-adapt tracking: ``x+ = Wx - a*y``, ``y+ = Wy + g(x+) - g(x)``."""
    op = MixingOperator.wrap(W)
    a = state.alphas.copy() if alpha is None else _steps(alpha, state.n)
    X_new = kernels.mix(op, state.X, 1) - a[:, None] * state.Y
    G_new = objective.gradients(X_new)
    Y_new = kernels.mix(op, state.Y, 1) + G_new - state.G
    return SolverState(
        X=X_new,
        Y=Y_new,
        G=G_new,
        X_prev=state.X,
        G_prev=state.G,
        alphas=a,
        alpha_source=np.full(state.n, kernels.ALPHA_INITIAL),
        k=state.k + 1,
        comms=state.comms + 2,
        grad_evals=state.grad_evals + state.n,
    )


def _plain_state(state, X_new, G_new, a, comms, WX_prev=None):
    return SolverState(
        X=X_new,
        Y=G_new,
        G=G_new,
        X_prev=state.X,
        G_prev=state.G,
        alphas=a,
        alpha_source=np.full(state.n, kernels.ALPHA_INITIAL),
        k=state.k + 1,
        comms=state.comms + comms,
        grad_evals=state.grad_evals + state.n,
        WX_prev=WX_prev,
    )


def extra_step(state, objective, W, alpha=None):
    """EXTRA with ``W~ = (I + W) / 2``.

    First step ``x1 = W x0 - a g0``, then
    ``x_{k+1} = x_k + W x_k - (x_{k-1} + W x_{k-1}) / 2 - a (g_k - g_{k-1})``.
    ``W x_{k-1}`` is cached, so each iteration costs one round.
    """
    op = MixingOperator.wrap(W)
    a = state.alphas.copy() if alpha is None else _steps(alpha, state.n)
    WX = kernels.mix(op, state.X, 1)
    if state.k == 0:
        X_new = WX - a[:, None] * state.G
    else:
        X_new = state.X + WX - 0.5 * (state.X_prev + state.WX_prev) - a[:, None] * (state.G - state.G_prev)
    return _plain_state(state, X_new, objective.gradients(X_new), a, 1, WX_prev=WX)


def dgd_step(state, objective, W, alpha=None):
    op = MixingOperator.wrap(W)
    a = state.alphas.copy() if alpha is None else _steps(alpha, state.n)
    X_new = kernels.mix(op, state.X, 1) - a[:, None] * state.G
    return _plain_state(state, X_new, objective.gradients(X_new), a, 1)


def near_dgd_plus_step(state, objective, W, alpha=None):
    """``x+ = W^t (x - a g)`` with ``t = k`` rounds at outer iteration ``k`` (1-based)."""
    op = MixingOperator.wrap(W)
    a = state.alphas.copy() if alpha is None else _steps(alpha, state.n)
    t = state.k + 1
    X_new = kernels.mix(op, state.X - a[:, None] * state.G, t)
    return _plain_state(state, X_new, objective.gradients(X_new), a, t)


def make_stepper(config):
    m = config.method
    if m == "dgm-bb-c":
        return lambda s, f, op: dgm_bb_c_step(s, f, op, config.R, config.bb, config.stall_tol)
    if m == "dgm-c":
        return lambda s, f, op: dgm_c_step(s, f, op, config.R)
    if m == "atc-diging":
        return lambda s, f, op: atc_diging_step(s, f, op)
    return {
        "diging": diging_step,
        "extra": extra_step,
        "dgd": dgd_step,
        "near-dgd+": near_dgd_plus_step,
    }[m]


def initial_steps(config):
    return config.alpha0 if config.method == "dgm-bb-c" else config.alpha


def residual_triple(state, x_star):
    xbar = state.X.mean(axis=0)
    ybar = state.Y.mean(axis=0)
    return (
        float(np.linalg.norm(state.X - xbar)),
        float(np.linalg.norm(state.Y - ybar)),
        float(np.linalg.norm(xbar - x_star)),
    )


def run(config, objective, W, X0=None, c_c=1.0, c_g=1.0, callback=None):
    """Iterate the configured method until ``target`` or ``max_iter``.

    Returns a :class:`RunRecord` with one row per iterate, row 0 being the
    initial point. Raises :class:`SolverDiverged` (carrying the partial
    record) when the relative error exceeds 1e6 or turns non-finite.
    """
    op = MixingOperator.wrap(W)
    if op.n != objective.n:
        raise ValueError(f"W is {op.n}x{op.n} but the objective has {objective.n} agents")
    step = make_stepper(config)
    state = init_state(objective, X0, initial_steps(config))
    n = objective.n
    x_star = np.ascontiguousarray(objective.x_star, dtype=np.float64)
    # same reduction as observe(), so row 0 is exactly 1
    e0 = float(kernels.state_metrics(state.X, state.Y, state.G, x_star)[0])
    record = RunRecord(method=config.method)
    record.meta.update(
        method=config.method,
        R=config.R if config.method in ("dgm-bb-c", "dgm-c") else None,
        bb=config.bb if config.method == "dgm-bb-c" else None,
        n=n,
        p=objective.p,
        c_c=c_c,
        c_g=c_g,
        backend=kernels.backend_name(),
    )

    def observe(st):
        err, v1, v2, v3, track = kernels.state_metrics(st.X, st.Y, st.G, x_star)
        rel = err / e0 if e0 > 0 else err
        record.append(
            k=st.k,
            rel_err=rel,
            grad_evals=st.grad_evals,
            comm_rounds=st.comms,
            cost=c_c * st.comms + c_g * st.grad_evals / n,
            mean_alpha=float(st.alphas.mean()),
            max_alpha=float(st.alphas.max()),
            v1=v1,
            v2=v2,
            v3=v3,
        )
        record.tracking_residual.append(track)
        record.alphas.append(st.alphas)
        record.alpha_sources.append(st.alpha_source)
        if callback is not None:
            callback(st)
        return rel

    rel = observe(state)
    while rel > config.target and state.k < config.max_iter:
        state = step(state, objective, op)
        rel = observe(state)
        if not np.isfinite(rel) or rel > DIVERGENCE_THRESHOLD:
            record.aborted = f"diverged at k={state.k} (rel_err={rel!r})"
            raise SolverDiverged(f"{config.method}: {record.aborted}", record)
    record.converged = rel <= config.target
    record.final_state = state
    return record
