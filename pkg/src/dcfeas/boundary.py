"""Parametrizations of the stability-region boundary and of the feasible-set boundary.

Three parameter families generate boundary points:

* ``lambda``: positive weights with ``h(lambda)`` positive definite,
  ``V = phi(lambda)``;
* ``mu``: positive weights with ``g(mu)`` a nonsingular M-matrix,
  ``V = psi(mu)``;
* ``nu``: points of the standard simplex, mapped to ``mu`` through
  ``Y_LL^-1``; these cover the boundary within the nonnegative orthant.
"""

from __future__ import annotations

import csv
import itertools
from math import comb
from dataclasses import dataclass

import numpy as np

from .errors import InvalidNu, LambdaNotAdmissible, MuNotAdmissible
from .powerflow import GridCore, _vec, g_of, h_of, in_Lambda, in_M, injected_power, phi, psi

FAMILIES = ("lambda", "mu", "nu")
CROSS_CHECK_RTOL = 1e-9


@dataclass(frozen=True)
class BoundaryPoint:
    family: str
    param: np.ndarray
    V_L: np.ndarray
    P_c: np.ndarray


def _cross_check(core: GridCore, V: np.ndarray, P: np.ndarray) -> None:
    direct = injected_power(core, V)
    scale = max(1.0, float(np.max(np.abs(P))))
    err = float(np.max(np.abs(direct - P)))
    if err > CROSS_CHECK_RTOL * scale:
        raise ArithmeticError(f"closed-form boundary demand differs from injected power by {err:.3e}")


def boundary_from_lambda(core: GridCore, lam) -> BoundaryPoint:
    """Boundary point ``phi(lambda)`` and its demand ``[phi][lambda]^-1 Y_LL [lambda] phi``."""
    lam = _vec(core, lam, "lambda")
    if not np.all(lam > 0):
        raise LambdaNotAdmissible(f"lambda must be positive: {lam}")
    lam = lam / lam.sum()
    V = phi(core, lam)
    P = V / lam * (core.Y_LL @ (lam * V))
    _cross_check(core, V, P)
    return BoundaryPoint("lambda", lam, V, P)


def boundary_from_mu(core: GridCore, mu) -> BoundaryPoint:
    """Boundary point ``psi(mu)`` and its demand ``[psi]^2 [mu]^-1 Y_LL mu``."""
    mu = _vec(core, mu, "mu")
    if not np.all(mu > 0):
        raise MuNotAdmissible(f"mu must be positive: {mu}")
    mu = mu / mu.sum()
    V = psi(core, mu)
    P = V ** 2 / mu * (core.Y_LL @ mu)
    _cross_check(core, V, P)
    return BoundaryPoint("mu", mu, V, P)


def boundary_from_nu(core: GridCore, nu) -> BoundaryPoint:
    """Boundary point for simplex weights ``nu`` via ``mu`` proportional to ``Y_LL^-1 nu``."""
    nu = _vec(core, nu, "nu")
    if not np.all(np.isfinite(nu)) or np.any(nu < 0) or not np.any(nu > 0):
        raise InvalidNu(f"nu must be nonnegative and nonzero: {nu}")
    nu = nu / nu.sum()
    mu = np.linalg.solve(core.Y_LL, nu)
    bp = boundary_from_mu(core, mu)
    return BoundaryPoint("nu", nu, bp.V_L, bp.P_c)


def lambda_to_mu(core: GridCore, lam) -> np.ndarray:
    lam = _vec(core, lam, "lambda")
    w = lam * phi(core, lam)
    return w / w.sum()


def mu_to_lambda(core: GridCore, mu) -> np.ndarray:
    mu = _vec(core, mu, "mu")
    w = mu / psi(core, mu)
    return w / w.sum()


def point_in_D(core: GridCore, lam, r: float) -> np.ndarray:
    """Stable operating point ``phi(lambda) + r h(lambda)^-1 lambda`` for ``r >= 0``."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    lam = _vec(core, lam, "lambda")
    V = phi(core, lam)
    return V + r * np.linalg.solve(h_of(core, lam), lam)


def point_in_D_dual(core: GridCore, mu, r: float) -> np.ndarray:
    """Stable operating point ``g(mu)^-1 [mu] (I_star + r 1)`` for ``r >= 0``."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    mu = _vec(core, mu, "mu")
    psi(core, mu)  # admissibility check
    return np.linalg.solve(g_of(core, mu), mu * (core.I_star + r))


def _admissible_interval(test, lo_ok: float, hi: float, iters: int = 60) -> float:
    """Largest admissible t on [lo_ok, hi] by bisection, given ``test(lo_ok)``."""
    if test(hi):
        return hi
    lo = lo_ok
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if test(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _safe(fn, *args):
    try:
        return fn(*args)
    except (LambdaNotAdmissible, MuNotAdmissible, np.linalg.LinAlgError, ArithmeticError):
        return None


def sweep_boundary(core: GridCore, family: str = "nu", samples: int = 101, seed: int = 42) -> list:
    """Sample boundary points of one parameter family.

    The ``nu`` family uses a deterministic simplex grid (exactly ``samples``
    points when ``n = 2``, the largest grid not exceeding ``samples``
    otherwise). For ``lambda`` and ``mu`` with ``n = 2`` the admissible
    interval is located by bisection and sampled strictly inside; for
    ``n >= 3`` admissible weights are drawn by rejection sampling from the
    simplex. Parameters where the maps are too ill-conditioned are skipped.
    Points are ordered by ascending first demand coordinate.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    n = core.n
    build = {"lambda": boundary_from_lambda, "mu": boundary_from_mu, "nu": boundary_from_nu}[family]
    if n == 1:
        return [build(core, np.ones(1))]

    if family == "nu":
        if n == 2:
            t = np.linspace(0.0, 1.0, samples)
            params = np.column_stack([1.0 - t, t])
        else:
            res = 1
            while _n_grid(n, res + 1) <= samples:
                res += 1
            params = [np.array(c, dtype=float) / res for c in _compositions(n, res)]
    elif n == 2:
        admissible = (lambda t: in_Lambda(core, [t, 1 - t])) if family == "lambda" else \
            (lambda t: in_M(core, [t, 1 - t]))
        if family == "lambda":
            centre = 0.5
        else:
            c = np.linalg.solve(core.Y_LL, np.ones(2))
            centre = c[0] / c.sum()
        hi = _admissible_interval(admissible, centre, 1.0)
        lo = 1.0 - _admissible_interval(lambda s: admissible(1.0 - s), 1.0 - centre, 1.0)
        t = np.linspace(lo, hi, samples + 2)[1:-1]
        params = np.column_stack([t, 1.0 - t])
    else:
        rng = np.random.default_rng(seed)
        admissible = (lambda v: in_Lambda(core, v)) if family == "lambda" else (lambda v: in_M(core, v))
        params = []
        tries = 0
        while len(params) < samples and tries < 200 * samples:
            batch = rng.dirichlet(np.ones(n), size=samples)
            for v in batch:
                tries += 1
                if admissible(v):
                    params.append(v)
                    if len(params) == samples:
                        break

    points = [bp for bp in (_safe(build, core, p) for p in params) if bp is not None]
    points.sort(key=lambda bp: (bp.P_c[0], -bp.P_c[1]))
    return points


def _n_grid(n: int, res: int) -> int:
    return comb(res + n - 1, n - 1)


def _compositions(n: int, total: int):
    for c in itertools.combinations(range(total + n - 1), n - 1):
        yield np.diff(np.concatenate(([-1], c, [total + n - 1]))) - 1


def write_boundary_csv(path, points) -> None:
    """One row per point: family, parameter, voltage and demand components.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(csv.writer(path), points)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(csv.writer(fh), points)


def _write_rows(w, points) -> None:
    if not points:
        w.writerow(["family"])
        return
    n = len(points[0].V_L)
    w.writerow(["family"] + [f"param_{i + 1}" for i in range(n)]
               + [f"V_{i + 1}" for i in range(n)] + [f"P_{i + 1}" for i in range(n)])
    for bp in points:
        w.writerow([bp.family] + [f"{x:.17g}" for x in (*bp.param, *bp.V_L, *bp.P_c)])
