"""Network description, Kirchhoff matrix assembly and Kron reduction.

Nodes are indexed loads first (``0..n-1``) and sources after
(``n..n+m-1``). The Kirchhoff matrix is the conductance-weighted Laplacian
of the line graph, partitioned into load/source blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedGraph,
    InvalidEdge,
    NetworkError,
    NoLoadsOrNoSources,
    NonpositiveConductance,
    NonpositiveSourceVoltage,
    NotKirchhoff,
    SingularBlock,
)
from .matanalysis import MTag, classify_m, is_irreducible

ROW_SUM_RTOL = 1e-12
SYMMETRY_RTOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    g: float


@dataclass(frozen=True)
class Network:
    """Resistive network: ``n_loads`` load nodes, ``n_sources`` source nodes."""

    n_loads: int
    n_sources: int
    edges: tuple[Edge, ...]
    source_voltages: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(
            e if isinstance(e, Edge) else Edge(int(e[0]), int(e[1]), float(e[2]))
            for e in self.edges))
        object.__setattr__(self, "source_voltages", _frozen(self.source_voltages))

    @property
    def n_nodes(self) -> int:
        return self.n_loads + self.n_sources

    def validate(self) -> None:
        """Raise a :class:`NetworkError` subclass if an invariant fails."""
        if self.n_loads < 1 or self.n_sources < 1:
            raise NoLoadsOrNoSources(
                f"need at least one load and one source, got n={self.n_loads}, m={self.n_sources}")
        if self.source_voltages.shape != (self.n_sources,):
            raise NetworkError(
                f"expected {self.n_sources} source voltages, got {self.source_voltages.shape[0]}")
        if not np.all(np.isfinite(self.source_voltages)) or np.any(self.source_voltages <= 0):
            raise NonpositiveSourceVoltage(f"source voltages must be > 0: {self.source_voltages}")
        N = self.n_nodes
        for k, e in enumerate(self.edges):
            if not (0 <= e.a < N and 0 <= e.b < N):
                raise InvalidEdge(f"edge {k}: node index out of range 0..{N - 1}: ({e.a}, {e.b})")
            if e.a == e.b:
                raise InvalidEdge(f"edge {k}: self-loop at node {e.a}")
            if not np.isfinite(e.g) or e.g <= 0:
                raise NonpositiveConductance(f"edge {k} ({e.a}, {e.b}): conductance {e.g} is not > 0")
        if not self.edges:
            raise DisconnectedGraph("network has no edges")
        rows = [e.a for e in self.edges]
        cols = [e.b for e in self.edges]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp > 1:
            raise DisconnectedGraph(f"graph has {n_comp} connected components; labels={labels.tolist()}")


@dataclass(frozen=True)
class KirchhoffPartition:
    """Load/source blocks of the Kirchhoff matrix ``Y``."""

    Y_LL: np.ndarray
    Y_LS: np.ndarray
    Y_SL: np.ndarray
    Y_SS: np.ndarray

    def __post_init__(self):
        for name in ("Y_LL", "Y_LS", "Y_SL", "Y_SS"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))

    @property
    def n(self) -> int:
        return self.Y_LL.shape[0]

    @property
    def m(self) -> int:
        return self.Y_SS.shape[0]

    @property
    def Y(self) -> np.ndarray:
        return np.block([[self.Y_LL, self.Y_LS], [self.Y_SL, self.Y_SS]])


def laplacian(n_nodes: int, edges: Iterable[Edge]) -> np.ndarray:
    Y = np.zeros((n_nodes, n_nodes))
    for e in edges:
        Y[e.a, e.a] += e.g
        Y[e.b, e.b] += e.g
        Y[e.a, e.b] -= e.g
        Y[e.b, e.a] -= e.g
    return Y


def build_kirchhoff(net: Network) -> KirchhoffPartition:
    """Assemble and partition the Kirchhoff matrix of ``net``.

    Raises
    ------
    DisconnectedGraph, NonpositiveConductance, NoLoadsOrNoSources
        If the network violates its invariants.
    """
    net.validate()
    Y = laplacian(net.n_nodes, net.edges)
    n = net.n_loads
    part = KirchhoffPartition(Y[:n, :n], Y[:n, n:], Y[n:, :n], Y[n:, n:])
    check_partition(part, raise_on_error=True)
    return part


def check_partition(part: KirchhoffPartition, raise_on_error: bool = False) -> list[tuple[str, bool, str]]:
    """Evaluate the partition invariants.

    Returns a list of ``(name, passed, detail)``; with ``raise_on_error`` the
    first failure raises :class:`NotKirchhoff` instead.
    """
    Y = part.Y
    scale = max(float(np.max(np.abs(np.diag(Y)))), np.finfo(float).tiny)
    results = []

    row_res = float(np.max(np.abs(Y.sum(axis=1))))
    results.append(("zero_row_sums", row_res <= ROW_SUM_RTOL * scale,
                    f"max |row sum| = {row_res:.3e}"))

    asym = float(np.max(np.abs(Y - Y.T)))
    results.append(("symmetric", asym <= SYMMETRY_RTOL * scale, f"max |Y - Y^T| = {asym:.3e}"))

    off = Y - np.diag(np.diag(Y))
    results.append(("z_matrix", bool(np.all(off <= 0)), f"max off-diagonal = {off.max():.3e}"))

    irreducible = is_irreducible(part.Y_LL)
    results.append(("Y_LL_irreducible", irreducible,
                    "load subgraph connected" if irreducible else "loads split into groups joined only via sources"))

    cls = classify_m(part.Y_LL)
    root = cls.perron.root if cls.perron is not None else float("nan")
    results.append(("Y_LL_nonsingular_M", cls.tag is MTag.NONSINGULAR_M,
                    f"class={cls.tag.value}, Perron root={root:.6g}"))

    ll_rows = part.Y_LL.sum(axis=1)
    results.append(("load_grounded", bool(np.all(ll_rows >= -ROW_SUM_RTOL * scale) and np.any(ll_rows > 0)),
                    f"Y_LL row sums = {np.array2string(ll_rows, precision=6)}"))

    if raise_on_error:
        for name, ok, detail in results:
            if not ok:
                raise NotKirchhoff(f"{name} failed: {detail}")
    return results


def kron_reduce(Y_LL: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    """Schur complement of ``Y_LL`` onto the kept index set ``alpha`` (0-based).

    Returns ``Y[a,a] - Y[a,c] Y[c,c]^-1 Y[c,a]`` with ``c`` the complement of
    ``alpha``; the full index set returns a copy of ``Y_LL``.
    """
    Y_LL = np.asarray(Y_LL, dtype=float)
    n = Y_LL.shape[0]
    keep = sorted(set(int(i) for i in alpha))
    if not keep:
        raise ValueError("alpha must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"alpha indices must lie in 0..{n - 1}: {keep}")
    rest = [i for i in range(n) if i not in set(keep)]
    if not rest:
        return Y_LL.copy()
    A = Y_LL[np.ix_(keep, keep)]
    B = Y_LL[np.ix_(keep, rest)]
    C = Y_LL[np.ix_(rest, keep)]
    D = Y_LL[np.ix_(rest, rest)]
    if np.linalg.cond(D) > 1e14:
        raise SingularBlock(f"eliminated block {rest} is singular")
    return A - B @ np.linalg.solve(D, C)


# -- file formats ------------------------------------------------------------

def _partition_from_direct(Y_LL, Y_LS) -> KirchhoffPartition:
    Y_LL = np.atleast_2d(np.asarray(Y_LL, dtype=float))
    Y_LS = np.asarray(Y_LS, dtype=float)
    if Y_LS.ndim == 1:
        Y_LS = Y_LS.reshape(-1, 1)
    n = Y_LL.shape[0]
    if Y_LL.shape != (n, n) or Y_LS.shape[0] != n:
        raise NotKirchhoff(f"inconsistent block shapes Y_LL{Y_LL.shape}, Y_LS{Y_LS.shape}")
    if n == 0 or Y_LS.shape[1] == 0:
        raise NoLoadsOrNoSources("need at least one load and one source")
    scale = max(float(np.max(np.abs(Y_LL))), np.finfo(float).tiny)
    if np.max(np.abs(Y_LL - Y_LL.T)) > SYMMETRY_RTOL * scale:
        raise NotKirchhoff("Y_LL is not symmetric")
    Y_LL = 0.5 * (Y_LL + Y_LL.T)
    Y_SL = Y_LS.T.copy()
    # No source-source lines are implied by the direct form.
    Y_SS = np.diag(-Y_SL.sum(axis=1))
    part = KirchhoffPartition(Y_LL, Y_LS, Y_SL, Y_SS)
    check_partition(part, raise_on_error=True)
    return part


def parse_network(obj: dict) -> tuple[KirchhoffPartition, np.ndarray]:
    """Build ``(partition, V_S)`` from a decoded network JSON object.

    Two layouts are accepted: the edge list
    ``{"loads", "sources", "source_voltages", "edges": [{"a", "b", "g"}]}``
    and the direct block form ``{"Y_LL", "Y_LS", "V_S"}``.
    """
    if not isinstance(obj, dict):
        raise NetworkError("network JSON must be an object")
    if "Y_LL" in obj:
        try:
            part = _partition_from_direct(obj["Y_LL"], obj["Y_LS"])
            V_S = np.asarray(obj["V_S"], dtype=float).reshape(-1)
        except KeyError as exc:
            raise NetworkError(f"direct form is missing key {exc}") from None
        if V_S.shape != (part.m,):
            raise NetworkError(f"expected {part.m} source voltages, got {V_S.shape[0]}")
        return part, V_S
    try:
        edges = tuple(Edge(int(e["a"]), int(e["b"]), float(e["g"])) for e in obj["edges"])
        net = Network(int(obj["loads"]), int(obj["sources"]), edges, obj["source_voltages"])
    except KeyError as exc:
        raise NetworkError(f"network is missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"malformed network: {exc}") from None
    return build_kirchhoff(net), net.source_voltages


def read_network(path) -> tuple[KirchhoffPartition, np.ndarray]:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_network(obj)


def network_to_dict(net: Network) -> dict:
    return {
        "loads": net.n_loads,
        "sources": net.n_sources,
        "source_voltages": net.source_voltages.tolist(),
        "edges": [{"a": e.a, "b": e.b, "g": e.g} for e in net.edges],
    }
