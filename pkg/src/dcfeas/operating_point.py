"""Desired operating point by continuation, stability classes and a brute-force oracle.

The desired operating point of a demand ``P`` is reached by following
``gamma(theta)`` with ``injected_power(gamma(theta)) = theta * P`` from the
open-circuit voltages at ``theta = 0``. The Perron root of the negated
Jacobian stays positive on the stable branch and vanishes at the first fold,
whose parameter is the ray margin ``theta_star``: ``t * P`` is feasible
exactly for ``t <= theta_star``.
"""

from __future__ import annotations

import csv
import enum
import itertools
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import NoConvergence, NonpositiveVoltage, SingularJacobian, StepFailure
from .matanalysis import MTag, classify_m, z_floor, z_floor_vector
from .powerflow import GridCore, _vec, injected_power, jacobian

THETA_INFINITE = sys.float_info.max
JAC_COND_LIMIT = 1e14


class Verdict(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    INFEASIBLE = "Infeasible"


class StabilityClass(enum.Enum):
    STABLE = "Stable"
    SEMI_STABLE_BOUNDARY = "SemiStableBoundary"
    OUTSIDE = "Outside"


@dataclass(frozen=True)
class ContinuationOptions:
    rtol: float = 1e-8
    atol: float = 1e-8
    boundary_band: float = 1e-6
    #: follow the path past theta=1 until the fold (or ``theta_max``)
    locate_margin: bool = True
    theta_max: float = 10.0
    h0: float = 0.05
    #: hand over to arclength stepping once rho < switch_ratio * rho(0)
    switch_ratio: float = 0.05
    max_steps: int = 20_000
    record_trace: bool = True


@dataclass
class ContinuationResult:
    theta_star: float
    verdict: Verdict
    V_L: Optional[np.ndarray] = None
    trace: list = field(default_factory=list, repr=False)
    #: True when the fold was not reached and theta_star is only a lower bound
    theta_star_is_bound: bool = False
    degenerate_ray: bool = False
    #: unit 1-norm left Perron vector of the negated Jacobian at the fold
    fold_normal: Optional[np.ndarray] = None
    fold_V: Optional[np.ndarray] = None
    n_steps: int = 0


# Dormand-Prince 5(4) tableau.
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _pc(core: GridCore, V: np.ndarray) -> np.ndarray:
    return V * (core.Y_LL @ (core.V_star - V))


def _rho(core: GridCore, V: np.ndarray) -> float:
    return z_floor(-jacobian(core, V))


def _res_tol(core: GridCore, target: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(target))), float(np.max(core.P_max)))
    return 1e-12 * scale


def _correct(core: GridCore, V: np.ndarray, target: np.ndarray, maxiter: int = 8) -> Optional[np.ndarray]:
    """Newton projection onto ``injected_power(V) = target``; None on failure."""
    tol = _res_tol(core, target)
    for _ in range(maxiter):
        F = _pc(core, V) - target
        if np.max(np.abs(F)) <= tol:
            return V
        try:
            dV = np.linalg.solve(jacobian(core, V), F)
        except np.linalg.LinAlgError:
            return None
        V = V - dV
        if not np.all(V > 0) or not np.all(np.isfinite(V)):
            return None
    F = _pc(core, V) - target
    return V if np.max(np.abs(F)) <= 100 * tol else None


def _dopri_step(core: GridCore, V: np.ndarray, P: np.ndarray, h: float):
    K = np.empty((7, V.size))
    for i in range(7):
        Vi = V + h * (np.asarray(_A[i]) @ K[:i]) if i else V
        if not np.all(Vi > 0):
            raise np.linalg.LinAlgError("stage left the positive orthant")
        J = jacobian(core, Vi)
        K[i] = np.linalg.solve(J, P)
        if not np.all(np.isfinite(K[i])):
            raise np.linalg.LinAlgError("non-finite stage derivative")
    V5 = V + h * (_B5 @ K)
    err = h * (_E @ K)
    return V5, err


class _Path:
    """Accepted continuation points and bookkeeping shared by both phases."""

    def __init__(self, core: GridCore, P: np.ndarray, opts: ContinuationOptions):
        self.core, self.P, self.opts = core, P, opts
        self.trace: list = []
        self.V_at_one: Optional[np.ndarray] = None
        self.steps = 0

    def accept(self, theta: float, V: np.ndarray, rho: float) -> None:
        self.steps += 1
        if self.steps > self.opts.max_steps:
            raise StepFailure("step budget exhausted", theta)
        if self.opts.record_trace:
            self.trace.append((float(theta), V.copy(), float(rho)))


def _theta_phase(path: _Path, theta_end: float):
    """Adaptive RK45 in theta with Newton re-projection.

    Returns ``(theta, V, rho, h, reached_end)``.
    """
    core, P, opts = path.core, path.P, path.opts
    V = core.V_star.copy()
    theta = 0.0
    rho0 = rho = _rho(core, V)
    path.accept(theta, V, rho)
    h = opts.h0
    h_min = 1e-12
    while theta < theta_end:
        h = min(h, theta_end - theta)
        if theta < 1.0 < theta + h:
            h = 1.0 - theta
        if h < h_min * max(1.0, theta):
            return theta, V, rho, h, False
        try:
            V5, err_vec = _dopri_step(core, V, P, h)
        except np.linalg.LinAlgError:
            h *= 0.25
            continue
        scale = opts.atol + opts.rtol * np.maximum(np.abs(V), np.abs(V5))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err) or err > 1.0:
            h *= 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            continue
        theta_new = 1.0 if theta < 1.0 and abs(theta + h - 1.0) <= 1e-15 else theta + h
        Vc = _correct(core, V5, theta_new * P)
        if Vc is None:
            h *= 0.25
            continue
        try:
            rho_c = _rho(core, Vc)
        except ValueError:
            h *= 0.25
            continue
        if rho_c <= 0:
            h *= 0.25
            continue
        theta, V, rho = theta_new, Vc, rho_c
        path.accept(theta, V, rho)
        if theta == 1.0:
            path.V_at_one = V.copy()
        if rho < opts.switch_ratio * rho0:
            return theta, V, rho, h, False
        h *= min(5.0, 0.9 * max(err, 1e-10) ** -0.2)
    return theta, V, rho, h, True


def _tangent(core: GridCore, P: np.ndarray, V: np.ndarray, prev: Optional[np.ndarray]) -> np.ndarray:
    n = V.size
    if prev is None:
        v = np.linalg.solve(jacobian(core, V), P)
        t = np.append(v, 1.0)
    else:
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = jacobian(core, V)
        A[:n, n] = -P
        A[n] = prev
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        t = np.linalg.solve(A, rhs)
        if t @ prev < 0:
            t = -t
    return t / np.linalg.norm(t)


def _arc_correct(core: GridCore, P: np.ndarray, x_pred: np.ndarray, t: np.ndarray, maxiter: int = 10):
    """Newton on ``[injected_power(V) - theta P; t.(x - x_pred)] = 0``."""
    n = P.size
    x = x_pred.copy()
    tol = _res_tol(core, P * max(1.0, abs(x_pred[n])))
    A = np.zeros((n + 1, n + 1))
    for k in range(maxiter):
        V, theta = x[:n], x[n]
        if not np.all(V > 0):
            return None, k
        F = np.append(_pc(core, V) - theta * P, t @ (x - x_pred))
        if np.max(np.abs(F)) <= tol:
            return x, k
        A[:n, :n] = jacobian(core, V)
        A[:n, n] = -P
        A[n] = t
        try:
            x = x - np.linalg.solve(A, F)
        except np.linalg.LinAlgError:
            return None, k
        if not np.all(np.isfinite(x)):
            return None, k
    V, theta = x[:n], x[n]
    if np.all(V > 0) and np.max(np.abs(_pc(core, V) - theta * P)) <= 100 * tol:
        return x, maxiter
    return None, maxiter


def _arclength_phase(path: _Path, theta: float, V: np.ndarray, h_theta: float, theta_end: float):
    """Pseudo-arclength stepping through the neighbourhood of the fold.

    Returns ``(theta_star, V_fold, reached_end)``.
    """
    core, P = path.core, path.P
    n = P.size
    x = np.append(V, theta)
    t = _tangent(core, P, V, None)
    s = max(h_theta * np.linalg.norm(np.append(np.linalg.solve(jacobian(core, V), P), 1.0)), 1e-10)
    s_min = 1e-13 * max(1.0, float(np.max(core.V_star)))
    while True:
        xc, iters = _arc_correct(core, P, x + s * t, t)
        if xc is None:
            s *= 0.5
            if s < s_min:
                raise StepFailure("arclength step collapsed", float(x[n]))
            continue
        try:
            rho_c = _rho(core, xc[:n])
        except ValueError:
            s *= 0.5
            if s < s_min:
                raise StepFailure("arclength step left the Z-matrix region", float(x[n]))
            continue
        if rho_c <= 0:
            return _locate_fold(path, x, t, s)
        if x[n] < 1.0 <= xc[n] and path.V_at_one is None:
            path.V_at_one = _segment_point(path, x, t, 0.0, s, lambda y: y[n] - 1.0)[:n]
        path.accept(xc[n], xc[:n], rho_c)
        if xc[n] >= theta_end:
            return float(xc[n]), xc[:n], True
        t = _tangent(core, P, xc[:n], t)
        x = xc
        if iters <= 3:
            s *= 1.5


def _segment_point(path: _Path, x: np.ndarray, t: np.ndarray, a: float, b: float, fn) -> np.ndarray:
    """Corrected point on ``x + sigma t`` where ``fn`` changes sign, ``sigma`` in ``[a, b]``."""
    core, P = path.core, path.P
    n = P.size
    cache: dict = {0.0: x}

    def point(sigma: float) -> np.ndarray:
        if sigma not in cache:
            xc, _ = _arc_correct(core, P, x + sigma * t, t, maxiter=20)
            if xc is None:
                raise StepFailure("corrector failed inside a bracketed segment", float(x[n]))
            cache[sigma] = xc
        return cache[sigma]

    fa, fb = fn(point(a)), fn(point(b))
    if fa == 0.0:
        return point(a)
    if fb == 0.0 or fa * fb > 0:
        return point(b)
    sigma = brentq(lambda sg: fn(point(sg)), a, b, xtol=1e-15 * max(1.0, b), rtol=4 * np.finfo(float).eps,
                   maxiter=200)
    return point(sigma)


def _locate_fold(path: _Path, x: np.ndarray, t: np.ndarray, s: float):
    """Fold on the arclength segment ``x + sigma t``: root of the Perron root."""
    core, P = path.core, path.P
    n = P.size

    def rho_of(y: np.ndarray) -> float:
        return _rho(core, y[:n])

    xf = _segment_point(path, x, t, 0.0, s, rho_of)
    if x[n] < 1.0 < xf[n] and path.V_at_one is None:
        # theta increases monotonically along the stable part of the segment
        sigma_f = float(t @ (xf - x))
        path.V_at_one = _segment_point(path, x, t, 0.0, sigma_f, lambda y: y[n] - 1.0)[:n]
    path.accept(xf[n], xf[:n], rho_of(xf))
    return float(xf[n]), xf[:n].copy(), False


def solve_desired(core: GridCore, P_c, opts: Optional[ContinuationOptions] = None) -> ContinuationResult:
    """Decide feasibility of ``P_c`` and compute its desired operating point.

    The verdict compares the ray margin ``theta_star`` with 1 using
    ``opts.boundary_band``. ``V_L`` is the Newton-polished path point at
    ``theta = 1`` for interior demands and the fold point for boundary
    demands; it is ``None`` for infeasible demands.

    Raises
    ------
    StepFailure
        When step control cannot make progress. This is reported as a
        numerical failure, never mapped to a verdict.
    """
    opts = opts or ContinuationOptions()
    P = _vec(core, P_c, "P_c")
    if not np.all(np.isfinite(P)):
        raise ValueError(f"demand must be finite: {P}")
    if not np.any(P):
        return ContinuationResult(THETA_INFINITE, Verdict.INTERIOR, core.V_star.copy(),
                                  [(0.0, core.V_star.copy(), _rho(core, core.V_star))],
                                  theta_star_is_bound=True, degenerate_ray=True)

    theta_end = opts.theta_max if opts.locate_margin else 1.0 + 10 * opts.boundary_band
    path = _Path(core, P, opts)
    theta, V, rho, h, reached = _theta_phase(path, theta_end)
    fold_V = None
    if reached:
        theta_star = theta
    else:
        theta_star, V_end, reached = _arclength_phase(path, theta, V, h, theta_end)
        if not reached:
            fold_V = V_end

    band = opts.boundary_band
    result = ContinuationResult(theta_star, Verdict.INTERIOR, trace=path.trace,
                                theta_star_is_bound=reached, n_steps=path.steps)
    if fold_V is not None:
        result.fold_V = fold_V
        result.fold_normal = z_floor_vector(-jacobian(core, fold_V).T)

    if not reached and abs(theta_star - 1.0) <= band:
        result.verdict = Verdict.BOUNDARY
        result.V_L = fold_V.copy()
    elif not reached and theta_star < 1.0:
        result.verdict = Verdict.INFEASIBLE
    else:
        if path.V_at_one is None:
            raise StepFailure("path passed theta=1 without a recorded point", theta_star)
        result.V_L = newton_refine(core, P, path.V_at_one)
    return result


def classify(core: GridCore, V_L, tol: Optional[float] = None) -> StabilityClass:
    """Stability class of an operating point from the M-matrix class of the negated Jacobian."""
    V_L = _vec(core, V_L, "V_L")
    if not np.all(V_L > 0):
        raise NonpositiveVoltage(f"operating point must be element-wise positive: {V_L}")
    tag = classify_m(-jacobian(core, V_L), tol).tag
    if tag is MTag.NONSINGULAR_M:
        return StabilityClass.STABLE
    if tag is MTag.SINGULAR_M:
        return StabilityClass.SEMI_STABLE_BOUNDARY
    return StabilityClass.OUTSIDE


def newton_refine(core: GridCore, P_c, V_0, maxiter: int = 30) -> np.ndarray:
    """Newton iteration on ``[V] Y_LL (V - V_star) + P_c = 0`` from ``V_0``.

    Stops when the max-norm residual is at most ``1e-10 * max(1, |P_c|_inf)``.
    """
    P = _vec(core, P_c, "P_c")
    V = _vec(core, V_0, "V_0").copy()
    tol = 1e-10 * max(1.0, float(np.max(np.abs(P))))
    for k in range(maxiter + 1):
        J = jacobian(core, V)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > JAC_COND_LIMIT:
            raise SingularJacobian(f"Jacobian is singular at iteration {k}, V={V}")
        F = _pc(core, V) - P
        if np.max(np.abs(F)) <= tol:
            return V
        if k == maxiter:
            break
        V = V - np.linalg.solve(J, F)
        if not np.all(np.isfinite(V)):
            break
    raise NoConvergence(f"Newton did not converge in {maxiter} iterations (|F|={np.max(np.abs(F)):.3e})")


# -- brute-force oracle --------------------------------------------------------

def solution_radius(core: GridCore, P_c) -> float:
    """Upper bound on the 2-norm of every real solution for demand ``P_c``.

    Summing the power-flow equations gives
    ``V^T Y_LL V - I_star^T V + 1^T P_c = 0``; with ``s`` the smallest
    eigenvalue of ``Y_LL`` this bounds ``|V|`` by the larger root of
    ``s r^2 - |I_star| r + 1^T P_c``.
    """
    P = _vec(core, P_c, "P_c")
    s = float(np.linalg.eigvalsh(core.Y_LL)[0])
    a = float(np.linalg.norm(core.I_star))
    disc = max(0.0, a * a - 4.0 * s * float(P.sum()))
    return (a + np.sqrt(disc)) / (2.0 * s)


def _batched_newton(core: GridCore, P: np.ndarray, X: np.ndarray, maxiter: int = 80) -> np.ndarray:
    Y, Vs = core.Y_LL, core.V_star
    n = P.size
    alive = np.ones(len(X), dtype=bool)
    for _ in range(maxiter):
        Xa = X[alive]
        if not len(Xa):
            break
        F = Xa * ((Vs - Xa) @ Y.T) - P
        D = (Vs - Xa) @ Y.T
        J = np.einsum("ki,ij->kij", Xa, -Y)
        J[:, np.arange(n), np.arange(n)] += D
        try:
            step = np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.empty_like(Xa)
            for k in range(len(Xa)):
                try:
                    step[k] = np.linalg.solve(J[k], F[k])
                except np.linalg.LinAlgError:
                    step[k] = np.nan
        Xn = Xa - step
        idx = np.flatnonzero(alive)
        bad = ~np.all(np.isfinite(Xn), axis=1) | (np.max(np.abs(Xn), axis=1) > 1e8)
        X[idx] = np.where(bad[:, None], X[idx], Xn)
        alive[idx[bad]] = False
    return X


def all_solutions_oracle(core: GridCore, P_c, starts_per_dim: int = 9) -> list:
    """All positive solutions of the power-flow equations for ``n <= 3``.

    ``n = 1`` uses the quadratic formula. For ``n = 2, 3`` Newton is started
    from a tensor grid whose 1-D nodes combine ``starts_per_dim`` linear
    points on ``(0, 2 max(V_star)]`` with ``starts_per_dim`` geometric points
    up to ``R`` (:func:`solution_radius`); converged points are deduplicated
    at ``1e-6 * max(V_star)``. Completeness for ``n > 1`` is best effort.
    Solutions are returned in decreasing order of their sum.
    """
    P = _vec(core, P_c, "P_c")
    n = core.n
    if n > 3:
        raise ValueError(f"oracle is limited to n <= 3, got n={n}")
    if n == 1:
        y = float(core.Y_LL[0, 0])
        I = float(core.I_star[0])
        disc = I * I - 4.0 * y * float(P[0])
        if disc < -1e-14 * I * I:
            return []
        if abs(disc) <= 1e-14 * I * I:
            roots = [I / (2.0 * y)]
        else:
            r = np.sqrt(disc)
            roots = [(I + r) / (2.0 * y), (I - r) / (2.0 * y)]
        return [np.array([v]) for v in roots if v > 0]

    R = solution_radius(core, P)
    vmax = float(np.max(core.V_star))
    # Linear starts cover the usual range below 2 V_star; geometric ones reach
    # low-voltage solutions and the far end of the a-priori ball.
    linear = 2.0 * vmax * (np.arange(starts_per_dim) + 0.5) / starts_per_dim
    geometric = np.geomspace(1e-3 * vmax, max(R, 2.0 * vmax), starts_per_dim)
    grid_1d = np.union1d(linear, geometric)
    X = np.array(list(itertools.product(grid_1d, repeat=n)), dtype=float)
    X = _batched_newton(core, P, X)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(P))), float(np.max(core.P_max)))
    F = X * ((core.V_star - X) @ core.Y_LL.T) - P
    # V_i -> 0 solves the i-th equation trivially when P_i = 0; such limits are not operating points.
    floor = 1e-8 * float(np.max(core.V_star))
    ok = np.all(np.isfinite(X), axis=1) & (np.max(np.abs(F), axis=1) <= tol) & np.all(X > floor, axis=1)
    dedup = 1e-6 * float(np.max(core.V_star))
    sols: list = []
    for x in X[ok]:
        if all(np.max(np.abs(x - s)) > dedup for s in sols):
            sols.append(x.copy())
    sols.sort(key=lambda v: -float(v.sum()))
    return sols


def write_trace_csv(path, trace) -> None:
    """Write a continuation trace as ``theta, V_1..V_n, perron_root`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if not trace:
            w.writerow(["theta", "perron_root"])
            return
        n = len(trace[0][1])
        w.writerow(["theta"] + [f"V_{i + 1}" for i in range(n)] + ["perron_root"])
        for theta, V, rho in trace:
            w.writerow([f"{theta:.17g}"] + [f"{v:.17g}" for v in V] + [f"{rho:.17g}"])
