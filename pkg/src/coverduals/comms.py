"""Communication graph and its symmetric normalized shift operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CommGraph:
    """Undirected radius graph over robot positions.

    Edges connect pairs at distance <= comm radius (inclusive), never a
    robot to itself.  Edge list is i < j lexicographic.
    """

    n: int
    edges: np.ndarray      # (e, 2) int, i < j
    adjacency: np.ndarray  # (n, n) float, symmetric, zero diagonal
    degrees: np.ndarray    # (n,) int

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i] > 0)


def build_graph(positions: np.ndarray, comm_radius: float) -> CommGraph:
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = positions.shape[0]
    if n < 1:
        raise ValueError("need at least one robot")
    if comm_radius <= 0:
        raise ValueError("comm_radius must be positive")
    diff = positions[:, None, :] - positions[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adjacency = (d2 <= comm_radius * comm_radius).astype(np.float64)
    np.fill_diagonal(adjacency, 0.0)
    iu, ju = np.triu_indices(n, k=1)
    mask = adjacency[iu, ju] > 0
    edges = np.stack([iu[mask], ju[mask]], axis=1)
    degrees = adjacency.sum(axis=1).astype(np.int64)
    return CommGraph(n, edges, adjacency, degrees)


def shift_operator(graph: CommGraph) -> np.ndarray:
    """Symmetric normalized adjacency D^{-1/2} A D^{-1/2}.

    Isolated nodes get all-zero rows and columns (pseudo-inverse of D), so
    they exchange no messages but keep their self term in graph filters.
    """
    d = graph.degrees.astype(np.float64)
    inv_sqrt = np.zeros_like(d)
    np.divide(1.0, np.sqrt(d), out=inv_sqrt, where=d > 0)
    return inv_sqrt[:, None] * graph.adjacency * inv_sqrt[None, :]
