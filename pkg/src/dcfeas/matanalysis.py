"""Z/M-matrix classification, Perron pairs and definiteness tests."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NonpositiveNu, NotSymmetric, NotZMatrix, Reducible

PERRON_RTOL = 1e-9
DENSE_EIG_MAX_N = 64


@dataclass(frozen=True)
class PerronPair:
    root: float
    vector: np.ndarray


class MTag(enum.Enum):
    NONSINGULAR_M = "NonsingularM"
    SINGULAR_M = "SingularM"
    NOT_M = "NotM"


@dataclass(frozen=True)
class MClass:
    tag: MTag
    perron: Optional[PerronPair] = None


def max_abs(A: np.ndarray) -> float:
    return float(np.max(np.abs(A))) if A.size else 0.0


def is_z_matrix(A: np.ndarray) -> bool:
    A = np.asarray(A, dtype=float)
    off = A - np.diag(np.diag(A))
    return bool(np.all(off <= 0))


def is_irreducible(A: np.ndarray) -> bool:
    """Strong connectivity of the exact nonzero off-diagonal pattern."""
    A = np.asarray(A)
    n = A.shape[0]
    if n == 1:
        return True
    pattern = (A != 0) & ~np.eye(n, dtype=bool)
    if n > DENSE_EIG_MAX_N:
        n_comp, _ = connected_components(pattern.astype(float), directed=True, connection="strong")
        return n_comp == 1
    # Strongly connected iff node 0 reaches everything forwards and backwards.
    return _reaches_all(pattern) and _reaches_all(pattern.T)


def _reaches_all(pattern: np.ndarray) -> bool:
    seen = np.zeros(pattern.shape[0], dtype=bool)
    seen[0] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = pattern[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return bool(seen.all())


def _normalize_positive(v: np.ndarray) -> np.ndarray:
    v = np.real(v)
    # Fix the sign by the entry of largest magnitude; the Perron vector has no sign changes.
    v = v * np.sign(v[np.argmax(np.abs(v))])
    return v / v.sum()


def _perron_dense(A: np.ndarray) -> tuple[float, np.ndarray]:
    if np.array_equal(A, A.T):
        w, V = np.linalg.eigh(A)
        return float(w[0]), V[:, 0]
    w, V = np.linalg.eig(A)
    k = int(np.argmin(w.real))
    return float(w[k].real), V[:, k]


def _perron_inverse_iteration(A: np.ndarray, maxiter: int = 10_000, tol: float = 1e-14) -> tuple[float, np.ndarray]:
    n = A.shape[0]
    # Gershgorin lower bound puts the shift strictly below the Perron root,
    # so A - sigma I is a nonsingular M-matrix with a positive inverse.
    radii = np.sum(np.abs(A), axis=1) - np.abs(np.diag(A))
    sigma = float(np.min(np.diag(A) - radii)) - 1.0
    lu = np.linalg.inv(A - sigma * np.eye(n))
    v = np.full(n, 1.0 / n)
    mu = 0.0
    for _ in range(maxiter):
        w = lu @ v
        mu_new = float(w.sum())
        w /= mu_new
        if np.max(np.abs(w - v)) <= tol:
            v = w
            mu = mu_new
            break
        v, mu = w, mu_new
    root = sigma + 1.0 / mu
    return root, v


def perron(A: np.ndarray) -> PerronPair:
    """Perron root and positive, 1-norm normalized Perron vector of an irreducible Z-matrix.

    Raises
    ------
    NotZMatrix
        If an off-diagonal entry is positive.
    Reducible
        If the nonzero pattern is not strongly connected.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not is_z_matrix(A):
        raise NotZMatrix("matrix has positive off-diagonal entries")
    if not is_irreducible(A):
        raise Reducible("matrix is reducible")
    if A.shape[0] <= DENSE_EIG_MAX_N:
        root, v = _perron_dense(A)
    else:
        root, v = _perron_inverse_iteration(A)
    v = _normalize_positive(v)
    # Perron vector is strictly positive in exact arithmetic; clip rounding noise.
    v = np.maximum(v, np.finfo(float).tiny)
    v.setflags(write=False)
    return PerronPair(root, v / v.sum())


def z_floor(A: np.ndarray) -> float:
    """Smallest real eigenvalue of a Z-matrix; the Perron root when ``A`` is irreducible."""
    A = np.asarray(A, dtype=float)
    if is_irreducible(A):
        return perron(A).root
    return float(np.min(np.linalg.eigvals(A).real))


def z_floor_vector(A: np.ndarray) -> np.ndarray:
    """Nonnegative unit 1-norm eigenvector for :func:`z_floor`.

    Strictly positive (the Perron vector) when ``A`` is irreducible; may
    have zero entries otherwise.
    """
    A = np.asarray(A, dtype=float)
    if is_irreducible(A):
        return np.array(perron(A).vector)
    w, V = np.linalg.eig(A)
    v = np.abs(np.real(V[:, int(np.argmin(w.real))]))
    return v / v.sum()


def classify_m(A: np.ndarray, tol: Optional[float] = None) -> MClass:
    """Classify ``A`` as a nonsingular M-, singular M- or non-M-matrix.

    The Perron root is compared against ``tol`` (default ``1e-9 * max|A|``).
    Reducible Z-matrices are classified from their smallest real eigenvalue and
    carry no Perron pair.
    """
    A = np.asarray(A, dtype=float)
    if not is_z_matrix(A):
        return MClass(MTag.NOT_M)
    if tol is None:
        tol = PERRON_RTOL * max_abs(A)
    if is_irreducible(A):
        pair = perron(A)
        root = pair.root
    else:
        pair = None
        root = float(np.min(np.linalg.eigvals(A).real))
    if root > tol:
        tag = MTag.NONSINGULAR_M
    elif abs(root) <= tol:
        tag = MTag.SINGULAR_M
    else:
        tag = MTag.NOT_M
    return MClass(tag, pair)


def check_symmetric(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {A.shape}")
    if max_abs(A - A.T) > rtol * max_abs(A):
        raise NotSymmetric("matrix is not symmetric")
    return A


def min_eig(A: np.ndarray) -> float:
    A = check_symmetric(A)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def is_positive_definite(A: np.ndarray, pd_tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of symmetric ``A`` exceeds ``pd_tol``.

    Pass a small negative ``pd_tol`` (e.g. ``-1e-10 * max|A|``) for a
    semi-definite test.
    """
    return min_eig(A) > pd_tol


def lmi_block(grid, nu: np.ndarray, P_c: np.ndarray) -> np.ndarray:
    """The ``(n+1) x (n+1)`` certificate matrix for weights ``nu > 0`` and demand ``P_c``.

    ``grid`` is anything carrying ``Y_LL`` and ``I_star`` (normally a
    :class:`~dcfeas.powerflow.GridCore`).

    Top-left block ``[nu]Y + Y[nu]``, off-diagonal column ``[nu] I*`` and
    corner ``2 nu^T P_c``. Positive definiteness for some ``nu`` proves that
    ``P_c`` is infeasible.
    """
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
        raise NonpositiveNu(f"nu must be element-wise positive: {nu}")
    Y_LL = grid.Y_LL
    n = Y_LL.shape[0]
    top = nu[:, None] * Y_LL + Y_LL * nu[None, :]
    col = nu * grid.I_star
    M = np.empty((n + 1, n + 1))
    M[:n, :n] = top
    M[:n, n] = col
    M[n, :n] = col
    M[n, n] = 2.0 * float(nu @ np.asarray(P_c, dtype=float))
    return M
