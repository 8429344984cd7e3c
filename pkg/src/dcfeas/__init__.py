"""Feasibility of constant-power demands in resistive DC grids."""

from .network import Edge, KirchhoffPartition, Network, build_kirchhoff, kron_reduce, parse_network, read_network
from .powerflow import GridCore, make_core

__all__ = [
    "Edge",
    "GridCore",
    "KirchhoffPartition",
    "Network",
    "build_kirchhoff",
    "kron_reduce",
    "make_core",
    "parse_network",
    "read_network",
]
