"""Feasibility conditions: supporting half-spaces, LMI certificates and sufficient tests.

Every verdict carries a ``provenance`` string naming the condition that
produced it, so reports can explain how a decision was reached.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import CoreInvariantViolation, InvalidP, LambdaNotAdmissible, NegativeDemand, TooManySubsets
from .matanalysis import lmi_block, max_abs
from .network import kron_reduce
from .powerflow import GridCore, _vec, h_of, in_Lambda, phi

TIGHT_RTOL = 1e-9
MAX_TIGHT_N = 16


# -- supporting half-spaces ---------------------------------------------------

@dataclass(frozen=True)
class HalfspaceCertificate:
    lam: np.ndarray
    margin: float


def halfspace_margin(core: GridCore, lam, P_c) -> HalfspaceCertificate:
    """Margin of ``P_c`` inside the supporting half-space with normal ``lam``.

    ``lam`` is scaled to unit 1-norm first. The margin
    ``phi^T h phi - lam^T P_c`` is nonnegative for every feasible demand and
    zero at the boundary demand generated by ``lam``.
    """
    lam = _vec(core, lam, "lambda")
    P = _vec(core, P_c, "P_c")
    if not np.all(lam > 0) or not in_Lambda(core, lam):
        raise LambdaNotAdmissible(f"h(lambda) is not positive definite for lambda={lam}")
    lam = lam / lam.sum()
    f = phi(core, lam)
    margin = float(f @ h_of(core, lam) @ f - lam @ P)
    return HalfspaceCertificate(lam, margin)


# -- LMI certificates ---------------------------------------------------------

@dataclass(frozen=True)
class InfeasibilityCertificate:
    nu: np.ndarray
    min_eig: float
    provenance: str = "lmi"


def _lmi_min_eig(core: GridCore, nu: np.ndarray, P: np.ndarray) -> tuple[float, float]:
    M = lmi_block(core, nu, P)
    return float(np.linalg.eigvalsh(M)[0]), max_abs(M)


def verify_certificate(core: GridCore, nu, P_c, semidefinite: bool = False) -> bool:
    """Check the certificate matrix for weights ``nu > 0``.

    The strict test (smallest eigenvalue above ``1e-12 * max|M|``, which
    guards against rounding) proves ``P_c`` infeasible. The semi-definite
    test (smallest eigenvalue at least ``-1e-10 * max|M|``) proves ``P_c``
    is not an interior demand.
    """
    P = _vec(core, P_c, "P_c")
    lo, scale = _lmi_min_eig(core, np.asarray(nu, dtype=float), P)
    if semidefinite:
        return lo >= -1e-10 * scale
    return lo > 1e-12 * scale


@lru_cache(maxsize=32)
def _simplex_grid(n: int, resolution: int) -> np.ndarray:
    """Barycentric grid with ``resolution`` subdivisions per edge (read-only, cached)."""
    if n == 1:
        grid = np.ones((1, 1))
    else:
        # stars and bars: bar positions -> part sizes
        bars = np.array(list(itertools.combinations(range(resolution + n - 1), n - 1)), dtype=int)
        edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), resolution + n - 1)])
        grid = (np.diff(edges, axis=1) - 1) / resolution
    grid.setflags(write=False)
    return grid


def find_certificate(core: GridCore, P_c, budget: int = 2000, seeds: Optional[Iterable] = None,
                     seed: int = 42) -> Optional[InfeasibilityCertificate]:
    """Search the open simplex for weights making the certificate matrix positive definite.

    The matrix is linear in ``nu``, so positive definiteness only depends on
    the direction of ``nu``. Seeds are the simplex centre, the corners with
    0.9 mass, supporting normals ``chi(nu)`` on a coarse grid and any
    caller-supplied vectors; the best seed is refined by Nelder-Mead on a
    softmax parametrization. ``budget`` caps the number of eigenvalue
    evaluations.

    Returns ``None`` when nothing is found, which does not prove
    feasibility.
    """
    P = _vec(core, P_c, "P_c")
    n = core.n
    evals = 0

    def score(nu: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        lo, scale = _lmi_min_eig(core, nu, P)
        return lo / max(scale, np.finfo(float).tiny)

    def accept(nu: np.ndarray) -> Optional[InfeasibilityCertificate]:
        if verify_certificate(core, nu, P):
            return InfeasibilityCertificate(nu.copy(), _lmi_min_eig(core, nu, P)[0])
        return None

    if n == 1:
        return accept(np.ones(1))

    cands = [np.full(n, 1.0 / n)]
    for i in range(n):
        c = np.full(n, 0.1 / (n - 1))
        c[i] = 0.9
        cands.append(c)
    if seeds is not None:
        for s in seeds:
            s = np.abs(np.asarray(s, dtype=float).reshape(-1))
            if s.shape == (n,) and s.sum() > 0:
                cands.append(s / s.sum())
    grid = _simplex_grid(n, 8 if n <= 3 else 2)
    normals = chi_batch(core, grid)
    cands.extend(normals / normals.sum(axis=1, keepdims=True))
    rng = np.random.default_rng(seed)
    cands.extend(rng.dirichlet(np.ones(n), size=4 * n))

    best_nu, best = None, -np.inf
    for c in cands:
        c = np.maximum(c, 1e-12)
        c = c / c.sum()
        if evals >= budget:
            break
        v = score(c)
        if v > best:
            best_nu, best = c, v
        if v > 1e-10:
            cert = accept(c)
            if cert is not None:
                return cert

    remaining = budget - evals
    if remaining <= 0 or best_nu is None:
        return None

    def softmax(z):
        e = np.exp(z - z.max())
        return e / e.sum()

    z0 = np.log(best_nu)
    res = minimize(lambda z: -score(softmax(z)), z0, method="Nelder-Mead",
                   options={"maxfev": remaining, "xatol": 1e-10, "fatol": 1e-14})
    return accept(softmax(res.x))


# -- nonnegative demands --------------------------------------------------------

class NonnegVerdict(enum.Enum):
    FEASIBLE = "Feasible"
    FEASIBLE_INTERIOR = "FeasibleInterior"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class NonnegResult:
    verdict: NonnegVerdict
    nu: np.ndarray
    m_min: float
    provenance: str = "nonneg-simplex"


def chi_batch(core: GridCore, nus: np.ndarray) -> np.ndarray:
    """Row-wise supporting normals ``chi(nu)`` for a batch of nonnegative ``nu``."""
    Y = core.Y_LL
    nus = np.atleast_2d(np.asarray(nus, dtype=float))
    mus = np.linalg.solve(Y, nus.T).T
    G = mus[:, :, None] * Y[None, :, :]
    idx = np.arange(core.n)
    G[:, idx, idx] += nus
    psis = np.linalg.solve(G, (mus * core.I_star)[..., None])[..., 0]
    return mus / psis


def nonneg_margin(core: GridCore, nus: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``m(nu) = 1/2 nu^T V_star - chi(nu)^T P`` row-wise."""
    nus = np.atleast_2d(nus)
    return 0.5 * nus @ core.V_star - chi_batch(core, nus) @ P


def nonneg_decide(core: GridCore, P_c, resolution: int = 200, tol: Optional[float] = None) -> NonnegResult:
    """Exact feasibility test for nonnegative demands, up to the simplex search.

    ``P_c`` is feasible iff ``m(nu) >= 0`` on the whole standard simplex. The
    minimum is located on a barycentric grid with ``resolution`` subdivisions
    per edge and polished by Nelder-Mead from the five worst nodes. An
    ``Infeasible`` verdict is always backed by an explicit ``nu``; the
    feasible verdicts depend on the search finding the global minimum.
    """
    P = _vec(core, P_c, "P_c")
    if np.any(P < 0):
        raise NegativeDemand(f"demand must be nonnegative: {P}")
    n = core.n
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.max(core.V_star)))
    grid = _simplex_grid(n, resolution)
    m = nonneg_margin(core, grid, P)
    order = np.argsort(m)
    best_nu, best_m = grid[order[0]], float(m[order[0]])

    if n > 1:
        def proj(z):
            z = np.maximum(z, 0.0)
            s = z.sum()
            return z / s if s > 0 else None

        def f(z):
            nu = proj(z)
            return np.inf if nu is None else float(nonneg_margin(core, nu, P)[0])

        for k in order[:5]:
            res = minimize(f, grid[k], method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-15, "maxfev": 400 * n})
            nu = proj(res.x)
            if nu is not None and res.fun < best_m:
                best_nu, best_m = nu, float(res.fun)

    if best_m < -tol:
        verdict = NonnegVerdict.INFEASIBLE
    elif best_m > tol:
        verdict = NonnegVerdict.FEASIBLE_INTERIOR
    else:
        verdict = NonnegVerdict.FEASIBLE
    return NonnegResult(verdict, np.asarray(best_nu, dtype=float), best_m)


def sufficient_clamped_nonneg(core: GridCore, P_c, resolution: int = 200) -> bool:
    """Feasibility of ``max(P_c, 0)``, which implies feasibility of ``P_c``."""
    P = np.maximum(_vec(core, P_c, "P_c"), 0.0)
    if not np.any(P):
        return True
    return nonneg_decide(core, P, resolution).verdict is not NonnegVerdict.INFEASIBLE


# -- polyhedral sufficient condition --------------------------------------------

class SPStatus(enum.Enum):
    HOLDS = "Holds"
    HOLDS_TIGHT = "HoldsTight"
    FAILS = "Fails"


@dataclass(frozen=True)
class SimpsonPorcoResult:
    status: SPStatus
    #: ``(1/4 [V*] Y_LL [V*])^-1 max(P_c, 0)``; the test is ``ratio <= 1``
    ratio: np.ndarray
    #: 0-based index set of the tight point, for HOLDS_TIGHT
    alpha: Optional[tuple] = None
    provenance: str = "simpson-porco"


def _scaled_laplacian(core: GridCore) -> np.ndarray:
    Vs = core.V_star
    return 0.25 * Vs[:, None] * core.Y_LL * Vs[None, :]


def tight_point(core: GridCore, alpha) -> np.ndarray:
    """Boundary demand loading only ``alpha`` (0-based) with the Kron-reduced grid."""
    alpha = sorted(set(int(i) for i in alpha))
    Yr = kron_reduce(core.Y_LL, alpha)
    Va = core.V_star[alpha]
    P = np.zeros(core.n)
    P[alpha] = 0.25 * Va * (Yr @ Va)
    return P


def sufficient_simpson_porco(core: GridCore, P_c, tol: float = TIGHT_RTOL) -> SimpsonPorcoResult:
    """Polyhedral sufficient condition ``(1/4 [V*] Y_LL [V*])^-1 max(P_c, 0) <= 1``.

    ``HOLDS_TIGHT`` marks demands that coincide with a tight point of the
    condition (loads outside ``alpha`` idle), which lie on the boundary of
    the feasible set. ``FAILS`` is inconclusive.
    """
    P = _vec(core, P_c, "P_c")
    x = np.linalg.solve(_scaled_laplacian(core), np.maximum(P, 0.0))
    if np.any(x > 1.0 + tol):
        return SimpsonPorcoResult(SPStatus.FAILS, x)
    alpha = tuple(int(i) for i in np.flatnonzero(x >= 1.0 - tol))
    if alpha:
        scale = max(1.0, float(np.max(core.P_max)))
        rest = [i for i in range(core.n) if i not in alpha]
        if np.all(np.abs(P[rest]) <= tol * scale):
            if np.max(np.abs(tight_point(core, alpha) - P)) <= tol * scale:
                return SimpsonPorcoResult(SPStatus.HOLDS_TIGHT, x, alpha)
    return SimpsonPorcoResult(SPStatus.HOLDS, x)


def tight_points(core: GridCore, validate: bool = False) -> list:
    """All tight points ``(alpha, P)`` over nonempty 0-based index sets ``alpha``.

    With ``validate`` each point is checked to sit on the feasibility
    boundary by continuation.
    """
    n = core.n
    if n > MAX_TIGHT_N:
        raise TooManySubsets(f"n={n} gives {2 ** n - 1} subsets; limit is n <= {MAX_TIGHT_N}")
    out = []
    for k in range(1, n + 1):
        for alpha in itertools.combinations(range(n), k):
            out.append((alpha, tight_point(core, alpha)))
    if validate:
        from .operating_point import Verdict, solve_desired

        for alpha, P in out:
            res = solve_desired(core, P)
            if res.verdict is not Verdict.BOUNDARY:
                raise CoreInvariantViolation(
                    f"tight point for alpha={alpha} has margin {res.theta_star:.12g}, expected 1")
    return out


# -- norm-ball sufficient condition ----------------------------------------------

def _conjugate(p: float) -> float:
    p = float(p)
    if not (p >= 1.0):
        raise InvalidP(f"p must lie in [1, inf], got {p}")
    if p == 1.0:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _bolognani_factor(core: GridCore, q: float) -> float:
    A = np.linalg.inv(_scaled_laplacian(core))
    if q == 1.0:
        rows = np.sum(np.abs(A), axis=1)
    elif np.isinf(q):
        rows = np.max(np.abs(A), axis=1)
    else:
        rows = np.linalg.norm(A, ord=q, axis=1)
    return float(np.max(rows))


def bolognani_radius(core: GridCore, p: float) -> float:
    """Radius of the largest ``p``-norm ball on which the norm-ball condition holds."""
    return 1.0 / _bolognani_factor(core, _conjugate(p))


def sufficient_bolognani(core: GridCore, P_c, p: float = 2.0) -> bool:
    """True iff ``|P_c|_p`` is strictly below :func:`bolognani_radius`; implies interior feasibility."""
    P = _vec(core, P_c, "P_c")
    q = _conjugate(p)
    return _bolognani_factor(core, q) * float(np.linalg.norm(P, ord=float(p))) < 1.0


def bolognani_extremal_point(core: GridCore, p: float) -> np.ndarray:
    """Nonnegative demand on the ball boundary where the polyhedral condition is also tight."""
    q = _conjugate(p)
    A = np.linalg.inv(_scaled_laplacian(core))
    if q == 1.0:
        rows = np.sum(np.abs(A), axis=1)
    elif np.isinf(q):
        rows = np.max(np.abs(A), axis=1)
    else:
        rows = np.linalg.norm(A, ord=q, axis=1)
    j = int(np.argmax(rows))
    v = A[j]
    if np.isinf(q):
        P = np.zeros(core.n)
        i = int(np.argmax(v))
        P[i] = 1.0 / v[i]
        return P
    if q == 1.0:
        # p = inf: the all-equal demand saturates Hoelder's inequality
        return np.full(core.n, 1.0 / v.sum())
    return v ** (q - 1.0) / np.sum(v ** q)


# -- domination -----------------------------------------------------------------

def dominates(P_low, P_high) -> bool:
    """True iff ``P_low <= P_high`` element-wise and the two differ.

    A feasible ``P_high`` then makes ``P_low`` an interior demand.
    """
    a = np.asarray(P_low, dtype=float).reshape(-1)
    b = np.asarray(P_high, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a != b))
