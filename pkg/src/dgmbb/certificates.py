"""Convergence certificates for DGM-BB-C.

Given the problem constants ``(L, mu, n)``, the mixing gap ``delta``, the
number of inner consensus rounds ``R`` and the largest step ``alpha_max``,
this module builds the 3x3 comparison matrix that bounds the error triple
``(||x - 1 xbar||, ||y - 1 ybar||, ||xbar - x*||)`` from one iteration to
the next, its spectral radius, and the admissibility quantities derived
from a positive weight vector ``c``:

* ``Delta``: the threshold ``delta**R`` must stay below,
* ``R_min``: the smallest ``R`` achieving that,
* ``alpha_hat``: the largest step the weight vector ``c`` certifies.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

SCHEMA = "dgmbb.certificate/1"
INTEGER_TOL = 1e-12
C3_MARGIN = 1e-6


class CertificateError(ValueError):
    pass


def build_G_alpha(delta, R, L, mu, n, alpha_max):
    """Entrywise upper bound of the per-iteration comparison matrix."""
    if not 0.0 <= delta < 1.0:
        raise CertificateError("delta must lie in [0, 1)")
    if R < 1 or not 0.0 < mu <= L or alpha_max <= 0:
        raise CertificateError("need R >= 1, 0 < mu <= L, alpha_max > 0")
    d = delta**R
    a = alpha_max
    rn = math.sqrt(n)
    return np.array(
        [
            [d + d * L * a, d * a, d * L * rn * a],
            [2 * d * L + d * L * L * a, d + d * L * a, d * L * L * rn * a],
            [L * a / rn, a / rn, 1.0 - mu / L],
        ]
    )


def mean_step_contraction(mean_alpha, L, mu):
    """Contraction of the averaged gradient step for mean step ``mean_alpha``."""
    return max(abs(1.0 - mu * mean_alpha), abs(1.0 - L * mean_alpha))


# ---------------------------------------------------------------------------
# spectral radius of a nonnegative 3x3 matrix


class SpectralError(ArithmeticError):
    pass


def _charpoly(G):
    """Coefficients of ``det(t I - G) = t^3 + b t^2 + c t + d``."""
    tr = G[0, 0] + G[1, 1] + G[2, 2]
    minors = (
        G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        + G[0, 0] * G[2, 2] - G[0, 2] * G[2, 0]
        + G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1]
    )
    det = float(np.linalg.det(G))
    return -tr, minors, -det


def _bisect(p, lo, hi):
    # invariant: p(lo) <= 0 < p(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if p(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _polish(G, t, steps=3):
    """Newton steps on ``det(t I - G)`` evaluated through LU.

    The expanded cubic loses digits to cancellation when eigenvalues
    cluster; the LU determinant is backward stable. Steps larger than
    ``1e-8 * max(1, |t|)`` are refused, which leaves ill-conditioned
    (multiple) roots where bisection put them.
    """
    eye = np.eye(3)
    for _ in range(steps):
        try:
            inv = np.linalg.inv(t * eye - G)
        except np.linalg.LinAlgError:
            return t  # exactly singular: t is an eigenvalue
        tr = float(np.trace(inv))
        if not math.isfinite(tr) or tr == 0.0:
            return t
        step = 1.0 / tr
        if abs(step) > 1e-8 * max(1.0, abs(t)):
            return t
        t -= step
        if abs(step) <= 4.0 * np.finfo(float).eps * max(1.0, abs(t)):
            break
    return t


def perron_root(G):
    """Largest real root of the characteristic cubic of nonnegative ``G``."""
    b, c, d = _charpoly(G)
    eps = np.finfo(float).eps

    def p(t):
        return ((t + b) * t + c) * t + d

    def horner_err(t):
        t = abs(t)
        return 16.0 * eps * (t**3 + abs(b) * t * t + abs(c) * t + abs(d))

    hi = float(G.sum(axis=1).max())
    if hi == 0.0:
        return 0.0
    hi *= 1.0 + 1e-15
    lo = -hi
    disc = 4.0 * b * b - 12.0 * c  # discriminant of p'(t) = 3t^2 + 2bt + c
    t0 = -b / 3.0  # inflection point
    if abs(disc) <= 16.0 * eps * (4.0 * b * b + 12.0 * abs(c)) and abs(p(t0)) <= horner_err(t0):
        # triple root: bisection would only resolve it to eps**(1/3)
        return t0
    if disc > 0.0:
        sq = math.sqrt(disc)
        c_hi = (-2.0 * b + sq) / 6.0
        c_lo = (-2.0 * b - sq) / 6.0
        if c_hi <= hi:
            pc = p(c_hi)
            if abs(pc) <= horner_err(c_hi):
                # double root at the local minimum: no sign change to bisect on,
                # and the critical point is a simple root of p', so exact to rounding
                return c_hi
            if pc < 0.0:
                # p increases on [c_hi, inf): unique largest root in there
                return _polish(G, _bisect(p, max(c_hi, lo), hi))
        return _polish(G, _bisect(p, lo, min(c_lo, hi)))
    return _polish(G, _bisect(p, lo, hi))


def _power_bounds(G, max_iter=2000):
    """Collatz-Wielandt bracket for ``rho(G)`` from power iteration on ``G + I``."""
    A = G + np.eye(3)
    v = np.ones(3) / math.sqrt(3.0)
    lower, upper = 0.0, float(A.sum(axis=1).max())
    for _ in range(max_iter):
        w = A @ v
        live = v > 1e-200
        ratios = w[live] / v[live]
        lower = max(lower, float(ratios.min()))
        if live.all():
            upper = min(upper, float(ratios.max()))
        if upper - lower <= 1e-14 * upper:
            break
        v = w / np.linalg.norm(w)
    return lower - 1.0, upper - 1.0


def spectral_radius_3x3(G, tol=1e-12):
    """Spectral radius of a nonnegative 3x3 matrix.

    Computed as the Perron root of the characteristic cubic (safeguarded
    bisection) and cross-checked against the Collatz-Wielandt bracket of a
    shifted power iteration. Raises :class:`SpectralError` if the two
    disagree by more than ``tol``.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.shape != (3, 3) or np.any(G < 0):
        raise SpectralError("expected a nonnegative 3x3 matrix")
    rho = perron_root(G)
    lower, upper = _power_bounds(G)
    slack = tol * max(1.0, rho)
    if not lower - slack <= rho <= upper + slack:
        raise SpectralError(
            f"cubic root {rho!r} outside power-iteration bracket [{lower!r}, {upper!r}]"
        )
    return rho


# ---------------------------------------------------------------------------
# admissibility quantities


def _check_c(c, L, mu, n):
    c1, c2, c3 = (float(v) for v in c)
    if min(c1, c2, c3) <= 0:
        raise CertificateError("c must be positive")
    floor = c3_floor(c1, c2, L, mu, n)
    if not c3 > floor:
        raise CertificateError(f"c3={c3!r} must exceed L(L c1 + c2)/(mu^2 sqrt n) = {floor!r}")
    return c1, c2, c3


def c3_floor(c1, c2, L, mu, n):
    return L * (L * c1 + c2) / (mu * mu * math.sqrt(n))


def big_c(c, L, n):
    c1, c2, c3 = c
    return L * c1 + c2 + L * math.sqrt(n) * c3


def delta_bound(c, L, mu, n):
    """Threshold ``Delta`` on ``delta**R`` for weight vector ``c``."""
    c1, c2, c3 = _check_c(c, L, mu, n)
    C = big_c((c1, c2, c3), L, n)
    return min(mu * c1 / (C + mu * c1), mu * c2 / (L * C + 2 * L * mu * c1 + mu * c2))


def min_inner_loops(Delta, delta):
    """Smallest ``R`` with ``delta**R < Delta`` via ``ceil(x) + [x in N+]``, ``x = ln Delta / ln delta``."""
    if delta == 0.0:
        return 1
    if not (0.0 < Delta < 1.0 and 0.0 < delta < 1.0):
        raise CertificateError("need 0 < Delta < 1 and 0 <= delta < 1")
    x = math.log(Delta) / math.log(delta)
    r = round(x)
    if abs(x - r) <= INTEGER_TOL and r >= 1:
        R = r + 1
    else:
        R = math.ceil(x)
    R = max(int(R), 1)
    while delta**R >= Delta:
        R += 1
    return R


def alpha_hat_terms(c, delta, R, L, mu, n):
    c1, c2, c3 = (float(v) for v in c)
    d = delta**R
    if not d < c2 / (2 * L * c1 + c2):
        raise CertificateError(
            f"delta^R = {d!r} violates delta^R < c2/(2 L c1 + c2) = {c2 / (2 * L * c1 + c2)!r}"
        )
    C = big_c((c1, c2, c3), L, n)
    t3 = mu * math.sqrt(n) * c3 / (L * (L * c1 + c2))
    if d == 0.0:
        return math.inf, math.inf, t3
    t1 = (1 - d) * c1 / (d * C)
    t2 = ((1 - d) * c2 - 2 * d * L * c1) / (d * L * C)
    return t1, t2, t3


def alpha_hat(c, delta, R, L, mu, n):
    """Largest step certified by ``c`` at ``delta**R``."""
    return min(alpha_hat_terms(c, delta, R, L, mu, n))


def select_c(L, mu, n, delta, starts=9):
    """Weight vector minimising the inner-loop bound ``R_min``.

    ``Delta`` is homogeneous of degree 0 in ``c``, so ``c1 = 1``. The search
    runs a coordinate pattern search in ``(log c2, log(c3 / c3_min))`` from
    a ``starts x starts`` grid of log-spaced starting points, where
    ``c3_min`` sits a relative ``1e-6`` above the admissible floor. Returns
    ``(c, R_min)``; maximising ``Delta`` is the smooth surrogate for
    minimising ``R_min``.
    """

    def unpack(u, t):
        c2 = math.exp(u)
        c3 = c3_floor(1.0, c2, L, mu, n) * (1.0 + C3_MARGIN) * math.exp(t)
        return (1.0, c2, c3)

    def score(u, t):
        return delta_bound(unpack(u, t), L, mu, n)

    best = None
    for u0 in np.linspace(math.log(1e-2), math.log(1e2), starts):
        for t0 in np.linspace(0.0, math.log(1e2), starts):
            u, t = float(u0), float(t0)
            f = score(u, t)
            step = 1.0
            while step > 1e-10:
                moved = False
                for du, dt in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
                    nu, nt = u + du, max(0.0, t + dt)
                    if (nu, nt) == (u, t):
                        continue
                    nf = score(nu, nt)
                    if nf > f:
                        u, t, f = nu, nt, nf
                        moved = True
                        break
                if not moved:
                    step *= 0.5
            if best is None or f > best[0]:
                best = (f, u, t)
    c = unpack(best[1], best[2])
    return np.array(c), min_inner_loops(best[0], delta)


@dataclass
class Certificate:
    c: list
    C: float
    Delta: float
    R: int
    R_min: int
    alpha_max: float
    alpha_hat: float
    G_alpha: list
    rho: float
    admissible: bool
    witness: bool
    R_sufficient: bool
    alpha_max_below_hat: bool
    alpha_hat_above_inv_mu: bool
    delta: float
    L: float
    mu: float
    n: int
    mean_alpha_max: float = None
    mean_step_below_2_over_L: bool = None
    mean_step_sufficient_bound: bool = None

    def to_dict(self):
        d = asdict(self)
        d["schema"] = SCHEMA
        return d


def certify(L, mu, n, delta, R, alpha_max=None, c=None, mean_alpha_max=None):
    """Assemble the full admissibility report for one configuration.

    ``alpha_max`` defaults to ``1/mu``, the largest step a BB rule can emit.
    When ``c`` is omitted it is chosen by :func:`select_c`.
    """
    if alpha_max is None:
        alpha_max = 1.0 / mu
    if c is None:
        c, _ = select_c(L, mu, n, delta)
    c = np.asarray(c, dtype=np.float64)
    Delta = delta_bound(c, L, mu, n)
    R_min = min_inner_loops(Delta, delta)
    G = build_G_alpha(delta, R, L, mu, n, alpha_max)
    rho = spectral_radius_3x3(G)
    try:
        ahat = alpha_hat(c, delta, R, L, mu, n)
    except CertificateError:
        ahat = float("nan")
    cert = Certificate(
        c=c.tolist(),
        C=big_c(c, L, n),
        Delta=Delta,
        R=int(R),
        R_min=R_min,
        alpha_max=float(alpha_max),
        alpha_hat=ahat,
        G_alpha=G.tolist(),
        rho=rho,
        admissible=rho < 1.0,
        witness=bool(np.all(G @ c < c)),
        R_sufficient=R >= R_min,
        alpha_max_below_hat=bool(alpha_max <= ahat),
        alpha_hat_above_inv_mu=bool(ahat > 1.0 / mu),
        delta=float(delta),
        L=float(L),
        mu=float(mu),
        n=int(n),
    )
    if mean_alpha_max is not None:
        cert.mean_alpha_max = float(mean_alpha_max)
        cert.mean_step_below_2_over_L = bool(mean_alpha_max < 2.0 / L)
        cert.mean_step_sufficient_bound = bool(mean_alpha_max <= 2.0 / L - mu / L**2)
    return cert
