"""Local Barzilai-Borwein step sizes.

For agent ``i`` with iterate difference ``s = x_k - x_{k-1}`` and gradient
difference ``z = grad f_i(x_k) - grad f_i(x_{k-1})`` the long step is
``s's / s'z`` and the short step ``s'z / z'z``. Under ``mu``-strong
convexity and ``L``-smoothness both land in ``[1/L, 1/mu]``.
"""

from dataclasses import dataclass

import numpy as np


class DegenerateCurvature(ArithmeticError):
    """The curvature pair cannot produce a BB step (``s'z <= 0`` or a zero vector)."""


@dataclass(frozen=True)
class CurvaturePair:
    s: np.ndarray
    z: np.ndarray

    @classmethod
    def from_iterates(cls, x, x_prev, g, g_prev):
        return cls(np.asarray(x, float) - x_prev, np.asarray(g, float) - g_prev)


def bb_long(pair):
    s, z = np.asarray(pair.s, float), np.asarray(pair.z, float)
    ss = float(s @ s)
    sz = float(s @ z)
    if ss == 0.0 or sz <= 0.0:
        raise DegenerateCurvature(f"s's={ss!r}, s'z={sz!r}")
    return ss / sz


def bb_short(pair):
    s, z = np.asarray(pair.s, float), np.asarray(pair.z, float)
    zz = float(z @ z)
    sz = float(s @ z)
    if zz == 0.0 or sz <= 0.0:
        raise DegenerateCurvature(f"z'z={zz!r}, s'z={sz!r}")
    return sz / zz


BB_RULES = {"long": bb_long, "short": bb_short}


def assert_bb_bounds(alpha, L, mu, tol=1e-9):
    """True iff ``1/L - tol <= alpha <= 1/mu + tol``."""
    return bool(1.0 / L - tol <= alpha <= 1.0 / mu + tol)


def bb_bounds_mask(alphas, L, mu, tol=1e-9):
    alphas = np.asarray(alphas, float)
    return (alphas >= 1.0 / L - tol) & (alphas <= 1.0 / mu + tol)
