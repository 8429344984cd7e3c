"""Power-flow maps on a fixed grid.

A :class:`GridCore` bundles the load-side Kirchhoff blocks with the derived
open-circuit quantities. All functions here are pure functions of
``(core, input)``.

Notation used in the code:

* ``I_star``: currents injected into the loads when all load potentials are zero
* ``V_star``: open-circuit load voltages, ``Y_LL V_star = I_star``
* ``P_max``: the feasible demand maximizing total load power
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoreInvariantViolation,
    DimensionMismatch,
    InvalidNu,
    LambdaNotAdmissible,
    MuNotAdmissible,
    NonpositiveSourceVoltage,
    NonpositiveVoltage,
)
from .matanalysis import MTag, classify_m, is_positive_definite
from .network import KirchhoffPartition, check_partition

PSI_COND_LIMIT = 1e12


def _ro(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridCore:
    partition: KirchhoffPartition = field(repr=False)
    V_S: np.ndarray
    I_star: np.ndarray
    V_star: np.ndarray
    P_max: np.ndarray

    @property
    def Y_LL(self) -> np.ndarray:
        return self.partition.Y_LL

    @property
    def Y_LS(self) -> np.ndarray:
        return self.partition.Y_LS

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def m(self) -> int:
        return self.partition.m

    def summary(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "V_star": self.V_star.tolist(),
            "I_star": self.I_star.tolist(),
            "P_max": self.P_max.tolist(),
        }


def make_core(part: KirchhoffPartition, V_S) -> GridCore:
    """Derive ``I_star``, ``V_star`` and ``P_max`` and check their invariants."""
    V_S = np.asarray(V_S, dtype=float).reshape(-1)
    if V_S.shape != (part.m,):
        raise DimensionMismatch(f"expected {part.m} source voltages, got {V_S.shape[0]}")
    if not np.all(np.isfinite(V_S)) or np.any(V_S <= 0):
        raise NonpositiveSourceVoltage(f"source voltages must be > 0: {V_S}")
    failures = [f"{name}: {detail}" for name, ok, detail in check_partition(part) if not ok]
    if failures:
        raise CoreInvariantViolation("; ".join(failures))

    I_star = -part.Y_LS @ V_S
    scale = float(np.max(np.abs(I_star))) if I_star.size else 0.0
    if np.any(I_star < -1e-12 * max(scale, 1.0)) or not np.any(I_star > 0):
        raise CoreInvariantViolation(f"source-injected currents must be >= 0 and not all zero: {I_star}")
    I_star = np.maximum(I_star, 0.0)
    V_star = np.linalg.solve(part.Y_LL, I_star)
    residual = float(np.max(np.abs(part.Y_LL @ V_star - I_star)))
    if residual > 1e-10 * max(float(np.max(I_star)), 1.0):
        raise CoreInvariantViolation(f"open-circuit solve residual {residual:.3e}")
    if np.any(V_star <= 0):
        raise CoreInvariantViolation(f"open-circuit voltages must be > 0: {V_star}")
    P_max = 0.25 * V_star * I_star
    return GridCore(part, _ro(V_S), _ro(I_star), _ro(V_star), _ro(P_max))


def _vec(core: GridCore, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (core.n,):
        raise DimensionMismatch(f"{name} must have length {core.n}, got {x.shape[0]}")
    return x


def _positive_voltage(core: GridCore, V_L) -> np.ndarray:
    V_L = _vec(core, V_L, "V_L")
    if not np.all(V_L > 0):
        raise NonpositiveVoltage(f"operating point must be element-wise positive: {V_L}")
    return V_L


def injected_power(core: GridCore, V_L) -> np.ndarray:
    """Constant-power demand served at operating point ``V_L``: ``[V] Y_LL (V_star - V)``."""
    V_L = _positive_voltage(core, V_L)
    return V_L * (core.Y_LL @ (core.V_star - V_L))


def jacobian(core: GridCore, V_L) -> np.ndarray:
    """Derivative of :func:`injected_power` with respect to ``V_L``."""
    V_L = _vec(core, V_L, "V_L")
    return np.diag(core.Y_LL @ (core.V_star - V_L)) - V_L[:, None] * core.Y_LL


def h_of(core: GridCore, lam) -> np.ndarray:
    lam = _vec(core, lam, "lambda")
    Y = core.Y_LL
    return 0.5 * (lam[:, None] * Y + Y * lam[None, :])


def in_Lambda(core: GridCore, lam) -> bool:
    return is_positive_definite(h_of(core, lam))


def g_of(core: GridCore, mu) -> np.ndarray:
    mu = _vec(core, mu, "mu")
    Y = core.Y_LL
    return mu[:, None] * Y + np.diag(Y @ mu)


def in_M(core: GridCore, mu) -> bool:
    mu = _vec(core, mu, "mu")
    ok = classify_m(g_of(core, mu)).tag is MTag.NONSINGULAR_M
    if ok and not np.all(mu > 0):
        raise AssertionError(f"g(mu) is a nonsingular M-matrix for non-positive mu={mu}")
    return ok


def phi(core: GridCore, lam) -> np.ndarray:
    """Boundary operating point ``1/2 h(lam)^-1 [lam] I_star`` for admissible ``lam``."""
    lam = _vec(core, lam, "lambda")
    H = h_of(core, lam)
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise LambdaNotAdmissible(f"h(lambda) is not positive definite for lambda={lam}") from None
    rhs = 0.5 * lam * core.I_star
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def psi(core: GridCore, mu) -> np.ndarray:
    """Boundary operating point ``g(mu)^-1 [mu] I_star`` for admissible ``mu``."""
    mu = _vec(core, mu, "mu")
    G = g_of(core, mu)
    if classify_m(G).tag is not MTag.NONSINGULAR_M:
        raise MuNotAdmissible(f"g(mu) is not a nonsingular M-matrix for mu={mu}")
    if np.linalg.cond(G) > PSI_COND_LIMIT:
        raise MuNotAdmissible(f"g(mu) is too ill-conditioned for mu={mu}")
    return np.linalg.solve(G, mu * core.I_star)


def _check_nu(core: GridCore, nu) -> np.ndarray:
    nu = _vec(core, nu, "nu")
    if not np.all(np.isfinite(nu)) or np.any(nu < 0) or not np.any(nu > 0):
        raise InvalidNu(f"nu must be nonnegative and nonzero: {nu}")
    return nu


def chi(core: GridCore, nu) -> np.ndarray:
    """Supporting-hyperplane normal ``[psi(Y^-1 nu)]^-1 Y^-1 nu`` for nonzero ``nu >= 0``.

    The result is homogeneous of degree one in ``nu``; see
    :func:`chi_normalized` for the unit 1-norm version.
    """
    nu = _check_nu(core, nu)
    mu = np.linalg.solve(core.Y_LL, nu)
    return mu / psi(core, mu)


def chi_normalized(core: GridCore, nu) -> np.ndarray:
    c = chi(core, nu)
    return c / c.sum()


def dissipation(core: GridCore, V_L) -> float:
    """Total resistive loss ``V^T Y V`` over the stacked load and source potentials."""
    V_L = _positive_voltage(core, V_L)
    V = np.concatenate([V_L, core.V_S])
    return float(V @ core.partition.Y @ V)


def source_power(core: GridCore, V_L) -> np.ndarray:
    V_L = _positive_voltage(core, V_L)
    p = core.partition
    return core.V_S * (p.Y_SL @ V_L + p.Y_SS @ core.V_S)


def to_single_source(core: GridCore) -> GridCore:
    """Equivalent grid with one unit-voltage source and all-ones open-circuit voltages.

    Load voltages map as ``V_L = [V_star] V_hat``; demands are unchanged.
    """
    Vs = core.V_star
    Y_LL = Vs[:, None] * core.Y_LL * Vs[None, :]
    # Loads without a source line keep an exact zero coupling here, which the
    # row sums of Y_LL would only reproduce up to rounding.
    Y_LS = -(Vs * core.I_star).reshape(-1, 1)
    Y_SS = np.array([[float((Vs * core.I_star).sum())]])
    part = KirchhoffPartition(Y_LL, Y_LS, Y_LS.T, Y_SS)
    return make_core(part, np.array([1.0]))
