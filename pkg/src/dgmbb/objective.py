"""Multi-agent smooth strongly convex objectives.

``MultiAgentObjective`` is the interface the solvers consume: stacked
gradients for an ``n x p`` matrix of agent iterates plus the uniform
per-agent constants ``L`` and ``mu``. ``LeastSquaresInstance`` is the
distributed sensing problem ``f_i(x) = 0.5 * ||M_i x - y_i||^2``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ObjectiveError(ValueError):
    pass


class MultiAgentObjective:
    """Base class for ``f(x) = (1/n) sum_i f_i(x)``.

    Subclasses set ``n``, ``p``, ``L``, ``mu`` and implement
    :meth:`local_value` and :meth:`local_gradient`. Overriding
    :meth:`gradients` with a batched version is optional. ``x_star`` must be
    provided for the relative-error metrics.
    """

    n: int
    p: int
    L: float
    mu: float
    x_star: np.ndarray

    def local_value(self, i, x):
        raise NotImplementedError

    def local_gradient(self, i, x):
        raise NotImplementedError

    def gradients(self, X):
        return np.stack([self.local_gradient(i, X[i]) for i in range(self.n)])

    def gradient_differences(self, S):
        """Rows ``grad f_i(x_i) - grad f_i(x_i - s_i)`` evaluated without cancellation.

        ``None`` means no stable form is known and callers should subtract
        stored gradients.
        """
        return None

    def value(self, x):
        return sum(self.local_value(i, x) for i in range(self.n)) / self.n

    def check_constants(self):
        if not 0.0 < self.mu <= self.L:
            raise ObjectiveError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")


@dataclass(eq=False)
class LeastSquaresInstance(MultiAgentObjective):
    """Per-agent least squares ``0.5 * ||M_i x - y_i||^2``.

    ``M`` has shape ``(n, m, p)`` and ``y`` shape ``(n, m)``. ``L`` and ``mu``
    are uniform per-agent bounds on the spectra of ``M_i^T M_i``; when not
    given they are computed from the data.
    """

    M: np.ndarray
    y: np.ndarray
    L: float = None
    mu: float = None
    x_star: np.ndarray = None
    signal: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.M = np.ascontiguousarray(self.M, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.M.ndim != 3 or self.y.shape != self.M.shape[:2]:
            raise ObjectiveError(f"shape mismatch: M {self.M.shape}, y {self.y.shape}")
        self.n, self.m, self.p = self.M.shape
        if self.L is None or self.mu is None:
            eig = np.linalg.eigvalsh(self.local_hessians())
            if self.L is None:
                self.L = float(eig[:, -1].max())
            if self.mu is None:
                self.mu = float(eig[:, 0].min())
        self.check_constants()
        if self.x_star is None:
            self.x_star = optimum(self)
        self.M.flags.writeable = False
        self.y.flags.writeable = False

    def local_hessians(self):
        return np.einsum("ima,imb->iab", self.M, self.M)

    def local_value(self, i, x):
        r = self.M[i] @ x - self.y[i]
        return 0.5 * float(r @ r)

    def local_gradient(self, i, x):
        X = np.asarray(x, dtype=np.float64).reshape(1, self.p)
        return kernels.lsq_gradients(self.M[i : i + 1], self.y[i : i + 1], X)[0]

    def gradients(self, X):
        return kernels.lsq_gradients(self.M, self.y, np.ascontiguousarray(X, dtype=np.float64))

    def gradient_differences(self, S):
        # M_i^T M_i s_i: the gradient kernel with zero data
        return kernels.lsq_gradients(self.M, np.zeros_like(self.y), np.ascontiguousarray(S, dtype=np.float64))

    def to_dict(self):
        return {
            "schema": "dgmbb.lsq/1",
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "L": self.L,
            "mu": self.mu,
            "M": self.M.ravel().tolist(),
            "y": self.y.ravel().tolist(),
            "x_star": self.x_star.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema", "dgmbb.lsq/1") != "dgmbb.lsq/1":
            raise ObjectiveError(f"unsupported instance schema {d.get('schema')!r}")
        n, m, p = int(d["n"]), int(d["m"]), int(d["p"])
        return cls(
            M=np.asarray(d["M"], dtype=np.float64).reshape(n, m, p),
            y=np.asarray(d["y"], dtype=np.float64).reshape(n, m),
            L=d.get("L"),
            mu=d.get("mu"),
            meta=dict(d.get("meta", {})),
        )


def optimum(inst):
    """Solve ``(sum_i M_i^T M_i) x = sum_i M_i^T y_i`` (dense SPD solve)."""
    import scipy.linalg

    H = np.einsum("ima,imb->ab", inst.M, inst.M)
    b = np.einsum("ima,im->a", inst.M, inst.y)
    try:
        return scipy.linalg.solve(H, b, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise ObjectiveError("normal equations are singular") from exc


def hessian_spectrum_bounds(inst):
    """Extreme eigenvalues ``(mu, L)`` of the average Hessian ``(1/n) sum M_i^T M_i``."""
    H = np.einsum("ima,imb->ab", inst.M, inst.M) / inst.n
    eig = np.linalg.eigvalsh(H)
    return float(eig[0]), float(eig[-1])


def _random_orthogonal(rng, k):
    if k == 0:
        return np.zeros((0, 0))
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def generate_sensing_instance(n, m, p, L=1.0, mu=0.5, noise_scale=0.01, seed=0):
    """Distributed sensing problem with every ``M_i^T M_i`` spectrum in ``[mu, L]``.

    Each Gaussian draw ``M_i`` keeps its left singular vectors; its singular
    values and right singular vectors are replaced. All agents share two
    right singular directions carrying curvature ``L`` and ``mu`` exactly,
    and each agent gets its own random rotation and spectrum (uniform in
    ``[mu, L]``) on the remaining ``p - 2`` directions. The average Hessian
    therefore has extreme eigenvalues exactly ``mu`` and ``L`` while the
    local Hessians differ.
    """
    if not 0.0 < mu <= L:
        raise ObjectiveError("need 0 < mu <= L")
    if m < p:
        raise ObjectiveError(f"each agent needs m >= p rows for local strong convexity (m={m}, p={p})")
    if p == 1 and mu != L:
        raise ObjectiveError("p = 1 cannot carry two distinct curvatures")
    rng = np.random.default_rng(seed)
    Q = _random_orthogonal(rng, p)
    top, bottom, middle = Q[:, :1], Q[:, -1:], Q[:, 1:-1]
    signal = rng.standard_normal(p)
    M = np.empty((n, m, p))
    for i in range(n):
        U, _, _ = np.linalg.svd(rng.standard_normal((m, p)), full_matrices=False)
        if p == 1:
            V = Q
            curv = np.array([L])
        else:
            V = np.hstack([top, middle @ _random_orthogonal(rng, p - 2), bottom])
            curv = np.concatenate([[L], rng.uniform(mu, L, p - 2), [mu]])
        M[i] = (U * np.sqrt(curv)) @ V.T
    y = np.einsum("imp,p->im", M, signal) + noise_scale * rng.standard_normal((n, m))
    inst = LeastSquaresInstance(
        M=M,
        y=y,
        L=float(L),
        mu=float(mu),
        signal=signal,
        meta={"n": n, "m": m, "p": p, "L": L, "mu": mu, "noise_scale": noise_scale, "seed": seed},
    )
    lo, hi = hessian_spectrum_bounds(inst)
    if lo <= 0.0 or not np.all(np.isfinite(inst.x_star)):
        raise ObjectiveError("degenerate draw: average Hessian is singular")
    return inst
