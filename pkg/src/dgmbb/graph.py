"""Communication graphs, Metropolis mixing matrices and the spectral gap.

All randomness goes through ``numpy.random.default_rng(seed)`` (PCG64).
Edge sampling visits unordered pairs ``(i, j), i < j`` in lexicographic
order and draws one uniform per pair, so a given ``(n, r_c, seed)`` always
yields the same edge set.
"""

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_RESAMPLES = 1000


class GraphError(ValueError):
    """Raised for disconnected graphs or invalid mixing matrices."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple  # sorted tuple of (i, j) with i < j

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop at agent {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @cached_property
    def neighbors(self):
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @property
    def degrees(self):
        return np.array([len(a) for a in self.neighbors], dtype=np.int64)

    def is_connected(self):
        if self.n <= 1:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self.neighbors[i]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n

    def to_dict(self):
        return {"schema": "dgmbb.graph/1", "n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d):
        if d.get("schema", "dgmbb.graph/1") != "dgmbb.graph/1":
            raise GraphError(f"unsupported graph schema {d.get('schema')!r}")
        return cls(int(d["n"]), tuple((int(i), int(j)) for i, j in d["edges"]))


def path_graph(n):
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n):
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def _sample_edges(n, r_c, seed):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < r_c
    return tuple(zip(iu[keep].tolist(), ju[keep].tolist()))


def generate_erdos_renyi(n, r_c, seed, max_resamples=MAX_RESAMPLES):
    """Sample a connected Erdos-Renyi graph G(n, r_c).

    Each unordered pair is kept independently with probability ``r_c``. A
    disconnected draw is discarded and redrawn with seed ``seed + 1``, then
    ``seed + 2`` and so on, which keeps the result distributed as G(n, r_c)
    conditioned on connectivity.

    Raises
    ------
    GraphError
        If no connected sample appears within ``max_resamples`` attempts.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 < r_c <= 1.0:
        raise ValueError("r_c must lie in (0, 1]")
    for attempt in range(max_resamples):
        g = Graph(n, _sample_edges(n, r_c, seed + attempt))
        if g.is_connected():
            return g
    raise GraphError(
        f"no connected G({n}, {r_c}) sample in {max_resamples} draws; r_c is too small for n"
    )


@dataclass(frozen=True)
class WeightMatrix:
    W: np.ndarray
    delta: float

    @property
    def n(self):
        return self.W.shape[0]

    def to_dict(self):
        return {
            "schema": "dgmbb.weights/1",
            "n": self.n,
            "weights": self.W.ravel().tolist(),
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema", "dgmbb.weights/1") != "dgmbb.weights/1":
            raise GraphError(f"unsupported weights schema {d.get('schema')!r}")
        n = int(d["n"])
        W = np.asarray(d["weights"], dtype=np.float64).reshape(n, n)
        return cls(W, spectral_gap(W))


def metropolis_weights(g):
    """Metropolis mixing matrix, ``w_ij = 1 / (1 + max(deg_i, deg_j))`` on edges."""
    if not g.is_connected():
        raise GraphError("Metropolis weights need a connected graph")
    deg = g.degrees
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    # diagonal from the neighbour sum in ascending index order, same on both sides
    for i in range(g.n):
        W[i, i] = 1.0 - sum(W[i, j] for j in g.neighbors[i])
    return WeightMatrix(W, spectral_gap(W))


def _deflated_norm(W):
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    D = W - np.full((n, n), 1.0 / n)
    if np.array_equal(W, W.T):
        return float(np.max(np.abs(np.linalg.eigvalsh(D))))
    return float(np.linalg.norm(D, 2))


def spectral_gap(W):
    """Return ``||W - 11^T / n||_2``.

    Raises ``GraphError`` when the value reaches ``1 - 1e-12``, which means
    the graph is disconnected or ``W`` is not a valid mixing matrix.
    """
    delta = _deflated_norm(W)
    if delta >= 1.0 - 1e-12:
        raise GraphError(f"spectral gap {delta!r} >= 1: disconnected graph or invalid W")
    return delta


@dataclass
class WeightReport:
    row_stochastic: bool
    column_stochastic: bool
    symmetric: bool
    sparsity_ok: bool
    nonnegative: bool
    delta: float
    delta_ok: bool
    max_row_error: float
    max_col_error: float

    @property
    def ok(self):
        return (
            self.row_stochastic
            and self.column_stochastic
            and self.symmetric
            and self.sparsity_ok
            and self.nonnegative
            and self.delta_ok
        )


def validate_weights(W, tol=1e-12, graph=None):
    """Diagnostic checklist for a candidate mixing matrix; never raises."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    row_err = float(np.max(np.abs(W.sum(axis=1) - 1.0)))
    col_err = float(np.max(np.abs(W.sum(axis=0) - 1.0)))
    sparsity_ok = True
    if graph is not None:
        allowed = np.eye(n, dtype=bool)
        for i, j in graph.edges:
            allowed[i, j] = allowed[j, i] = True
        sparsity_ok = bool(np.all(W[~allowed] == 0.0))
    delta = _deflated_norm(W)
    return WeightReport(
        row_stochastic=row_err <= tol,
        column_stochastic=col_err <= tol,
        symmetric=bool(np.allclose(W, W.T, rtol=0.0, atol=tol)),
        sparsity_ok=sparsity_ok,
        nonnegative=bool(np.all(W >= -tol)),
        delta=delta,
        delta_ok=delta < 1.0 - 1e-12,
        max_row_error=row_err,
        max_col_error=col_err,
    )


class MixingOperator:
    """A mixing matrix held both densely and in CSR form for the sweep kernel."""

    def __init__(self, W):
        W = np.ascontiguousarray(W, dtype=np.float64)
        self.dense = W
        n = W.shape[0]
        mask = W != 0.0
        self.indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
        rows, cols = np.nonzero(mask)
        self.indices = cols.astype(np.int64)
        self.data = W[rows, cols].copy()
        self.n = n

    @classmethod
    def wrap(cls, W):
        if isinstance(W, cls):
            return W
        if isinstance(W, WeightMatrix):
            return cls(W.W)
        return cls(W)
