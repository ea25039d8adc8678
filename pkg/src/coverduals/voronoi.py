"""Grid Voronoi partitions, coverage costs, and density-weighted centroids.

Cells are assigned to the nearest robot by Euclidean distance between the
cell centre and robot positions, ties broken by lowest robot index.  On the
grid, the min-over-robots form of the coverage cost and the per-partition
sum coincide exactly, which the test suite exploits as a self-check.

The assignment kernel is compiled with numba and parallelised over grid
rows; every cell is computed independently, so results are identical for
any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit, prange

from .world import GridField


@njit(parallel=True, cache=True)
def _assign_kernel(px, py, nx, ny, res):  # pragma: no cover - compiled
    num = px.shape[0]
    assignment = np.empty((nx, ny), dtype=np.int32)
    dist2 = np.empty((nx, ny), dtype=np.float64)
    for ix in prange(nx):
        x = (ix + 0.5) * res
        for iy in range(ny):
            y = (iy + 0.5) * res
            best = 0
            best_d = 1.0e300
            for r in range(num):
                dx = px[r] - x
                dy = py[r] - y
                d = dx * dx + dy * dy
                if d < best_d:
                    best_d = d
                    best = r
            assignment[ix, iy] = best
            dist2[ix, iy] = best_d
    return assignment, dist2


@njit(parallel=True, cache=True)
def _cvt_kernel(px, py, nx, ny, res, weights):  # pragma: no cover - compiled
    """Assignment plus per-row weighted moments in one pass.

    Moments are accumulated per grid row and reduced afterwards in fixed
    row order, so results do not depend on the thread count.
    """
    num = px.shape[0]
    assignment = np.empty((nx, ny), dtype=np.int32)
    dist2 = np.empty((nx, ny), dtype=np.float64)
    row_mass = np.zeros((nx, num), dtype=np.float64)
    row_wx = np.zeros((nx, num), dtype=np.float64)
    row_wy = np.zeros((nx, num), dtype=np.float64)
    for ix in prange(nx):
        x = (ix + 0.5) * res
        for iy in range(ny):
            y = (iy + 0.5) * res
            best = 0
            best_d = 1.0e300
            for r in range(num):
                dx = px[r] - x
                dy = py[r] - y
                d = dx * dx + dy * dy
                if d < best_d:
                    best_d = d
                    best = r
            assignment[ix, iy] = best
            dist2[ix, iy] = best_d
            w = weights[ix, iy]
            row_mass[ix, best] += w
            row_wx[ix, best] += w * x
            row_wy[ix, best] += w * y
    return assignment, dist2, row_mass, row_wx, row_wy


@dataclass
class Partition:
    """Cell-to-robot assignment plus squared distance to the assigned robot."""

    assignment: np.ndarray  # (n, n) int32
    dist2: np.ndarray       # (n, n) float64, to the assigned (nearest) robot
    num_robots: int

    def cells(self, i: int) -> np.ndarray:
        """Grid indices (k, 2) of the cells owned by robot i."""
        return np.argwhere(self.assignment == i)


# Policies and the cost logger often partition the same positions twice in
# a row; a one-slot memo halves the kernel work in long runs.
_memo: dict = {"key": None, "value": None}


def partition(positions: np.ndarray, grid_shape, resolution: float
              ) -> Partition:
    """Nearest-robot assignment of every cell centre (ties: lowest index).

    ``grid_shape`` is either a side length (square grid) or an
    ``(nx, ny)`` pair.
    """
    nx, ny = (grid_shape, grid_shape) if np.isscalar(grid_shape) else grid_shape
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if positions.shape[0] == 0:
        raise ValueError("need at least one robot")
    key = (positions.tobytes(), nx, ny, resolution)
    if _memo["key"] == key:
        return _memo["value"]
    assignment, dist2 = _assign_kernel(
        np.ascontiguousarray(positions[:, 0]),
        np.ascontiguousarray(positions[:, 1]),
        nx, ny, resolution)
    result = Partition(assignment, dist2, positions.shape[0])
    _memo["key"] = key
    _memo["value"] = result
    return result


def lloyd_moments(positions: np.ndarray, field: GridField
                  ) -> tuple[Partition, np.ndarray, np.ndarray]:
    """Partition plus per-robot (mass, weighted centroid) in a single fused
    kernel pass.  Robots with zero mass keep their own position as centroid.
    Agrees with :func:`partition` + :func:`weighted_centroids`."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if positions.shape[0] == 0:
        raise ValueError("need at least one robot")
    assignment, dist2, row_mass, row_wx, row_wy = _cvt_kernel(
        np.ascontiguousarray(positions[:, 0]),
        np.ascontiguousarray(positions[:, 1]),
        field.width, field.height, field.resolution, field.values)
    part = Partition(assignment, dist2, positions.shape[0])
    _memo["key"] = (positions.tobytes(), field.width, field.height,
                    field.resolution)
    _memo["value"] = part
    mass = row_mass.sum(axis=0)
    centroids = positions.copy()
    nonzero = mass > 0
    centroids[nonzero, 0] = row_wx.sum(axis=0)[nonzero] / mass[nonzero]
    centroids[nonzero, 1] = row_wy.sum(axis=0)[nonzero] / mass[nonzero]
    return part, mass * field.cell_area, centroids


def coverage_cost(positions: np.ndarray, field: GridField,
                  f: Optional[Callable[[np.ndarray], np.ndarray]] = None
                  ) -> float:
    """Coverage cost: sum over cells of min_i f(dist) * density * cell area.

    ``f`` must be nondecreasing with f(0) = 0; the default is f(x) = x^2.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if positions.shape[0] == 0:
        raise ValueError("need at least one robot")
    part = partition(positions, (field.width, field.height), field.resolution)
    # f nondecreasing, so min_i f(d_i) = f(min_i d_i)
    if f is None:
        per_cell = part.dist2
    else:
        per_cell = f(np.sqrt(part.dist2))
    return float((per_cell * field.values).sum() * field.cell_area)


def coverage_cost_partition(positions: np.ndarray, field: GridField,
                            part: Partition,
                            f: Optional[Callable[[np.ndarray], np.ndarray]] = None
                            ) -> float:
    """Coverage cost via the partition-sum form: each cell contributes the
    distance to its *assigned* robot.  Agrees exactly with
    :func:`coverage_cost` on the same grid."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    xs, ys = field.cell_centers()
    px = positions[part.assignment, 0]
    py = positions[part.assignment, 1]
    d2 = (xs[:, None] - px) ** 2 + (ys[None, :] - py) ** 2
    per_cell = d2 if f is None else f(np.sqrt(d2))
    return float((per_cell * field.values).sum() * field.cell_area)


def per_field_costs(part: Partition, fields: Sequence[GridField]) -> np.ndarray:
    """Coverage cost of each field against a shared partition (default f)."""
    d2 = part.dist2.ravel()
    out = np.empty(len(fields))
    for m, fld in enumerate(fields):
        out[m] = d2 @ fld.values.ravel() * fld.cell_area
    return out


def weighted_centroids(part: Partition, field: GridField,
                       positions: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Per-robot density mass and weighted centroid of its cells.

    Robots whose cells carry zero mass get mass 0 and their own position as
    the centroid.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n_rob = part.num_robots
    xs, ys = field.cell_centers()
    w = field.values.ravel()
    labels = part.assignment.ravel()
    mass = np.bincount(labels, weights=w, minlength=n_rob)
    cx = np.bincount(labels, weights=w * np.broadcast_to(
        xs[:, None], field.values.shape).ravel(), minlength=n_rob)
    cy = np.bincount(labels, weights=w * np.broadcast_to(
        ys[None, :], field.values.shape).ravel(), minlength=n_rob)
    centroids = positions.copy()
    nonzero = mass > 0
    centroids[nonzero, 0] = cx[nonzero] / mass[nonzero]
    centroids[nonzero, 1] = cy[nonzero] / mass[nonzero]
    return mass * field.cell_area, centroids


def field_inertia(field: GridField) -> float:
    """Second moment of the density about its weighted mean: the coverage
    cost of a single robot parked at the field's centroid.  Used as a
    per-field normaliser so reported costs are O(1) and scale-free."""
    xs, ys = field.cell_centers()
    total = field.values.sum()
    if total <= 0:
        raise ValueError("zero field has no inertia")
    mx = (field.values.sum(axis=1) @ xs) / total
    my = (field.values.sum(axis=0) @ ys) / total
    d2 = (xs - mx)[:, None] ** 2 + (ys - my)[None, :] ** 2
    return float((d2 * field.values).sum() * field.cell_area)
