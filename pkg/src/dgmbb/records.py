"""Per-iteration run records and their CSV form."""

import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = (
    "k",
    "rel_err",
    "grad_evals",
    "comm_rounds",
    "cost",
    "mean_alpha",
    "max_alpha",
    "v1",
    "v2",
    "v3",
)


@dataclass
class RunRecord:
    """Metrics of one solver run, one row per iterate ``x_k``.

    ``mean_alpha``/``max_alpha`` in row ``k`` are the step sizes applied in
    the iteration that produced ``x_k``; row 0 carries the configured
    initial steps. ``v1, v2, v3`` are the consensus error of ``x``, the
    consensus error of the search direction (tracker ``y`` for tracking
    methods, local gradients otherwise) and the distance of the network
    average from ``x*``.
    """

    method: str
    columns: dict = field(default_factory=lambda: {c: [] for c in CSV_COLUMNS})
    tracking_residual: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    alpha_sources: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    converged: bool = False
    aborted: str = None
    final_state: object = None

    def __len__(self):
        return len(self.columns["k"])

    def append(self, **row):
        for c in CSV_COLUMNS:
            self.columns[c].append(row[c])

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)

    @property
    def rel_err(self):
        return self.array("rel_err")

    @property
    def iterations(self):
        return len(self) - 1

    def first_hit(self, target, column="k"):
        """Value of ``column`` at the first row with ``rel_err <= target`` (None if never)."""
        for idx, e in enumerate(self.columns["rel_err"]):
            if e <= target:
                return self.columns[column][idx]
        return None

    def alpha_stats(self, bb_only=True):
        """``(alpha_max, mean_alpha_max)`` over the recorded steps.

        With ``bb_only`` the user-supplied initial step is excluded, so the
        numbers describe steps produced by the BB rule.
        """
        # row 0 and row 1 both carry alpha_0; BB output starts at row 2
        A = self.alphas[2:] if bb_only else self.alphas
        if len(A) == 0:
            return float("nan"), float("nan")
        A = np.asarray(A)
        return float(A.max()), float(A.mean(axis=1).max())


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def csv_text(record):
    buf = io.StringIO(newline="")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    cols = [record.columns[c] for c in CSV_COLUMNS]
    for row in zip(*cols):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(record, path):
    atomic_write(path, csv_text(record))


def read_csv(path):
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS}
