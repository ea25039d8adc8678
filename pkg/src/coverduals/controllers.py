"""Primal policies: clairvoyant, centralized, and decentralized CVT.

All controllers share the same velocity law: compute a (global or local)
Voronoi partition on whichever density the controller is allowed to see,
then head for the density-weighted centroid of the own cell at
``(centroid - position) / dt``, clipped to the speed limit.  Cells with no
observed mass produce a zero action.
"""

from __future__ import annotations

import numpy as np

from . import comms, voronoi
from .world import GridField, World, WorldConfig, clip_speed, combined_field


class Policy:
    """Interface: snapshot of the world plus field weights in, actions out.

    Implementations must clip every action to ``max_speed`` and
    decentralized ones may only read a robot's own maps and position plus
    neighbor positions and messages.
    """

    name = "policy"

    def compute_actions(self, world: World, lam: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def cvt_actions(positions: np.ndarray, field: GridField,
                config: WorldConfig) -> np.ndarray:
    """One Lloyd step on a given density: move toward weighted centroids."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    _, _, centroids = voronoi.lloyd_moments(positions, field)
    return clip_speed((centroids - positions) / config.dt, config.max_speed)


def clairvoyant_cvt(positions: np.ndarray, true_field: GridField,
                    config: WorldConfig) -> np.ndarray:
    """CVT step with perfect field knowledge."""
    return cvt_actions(positions, true_field, config)


def centralized_cvt(positions: np.ndarray, fused_field: GridField,
                    config: WorldConfig) -> np.ndarray:
    """CVT step on the union of all robots' observations (unseen cells 0)."""
    return cvt_actions(positions, fused_field, config)


def decentralized_cvt(self_idx: int, site_positions: np.ndarray,
                      own_field: GridField, config: WorldConfig) -> np.ndarray:
    """CVT action for one robot from its local view.

    ``site_positions`` are the robot and its neighbors (the robot at row
    ``self_idx``), ordered by global robot index so grid tie-breaking stays
    consistent with the global partition.  The local Voronoi cell is
    computed against these sites only, on the robot's own observed density.
    """
    sites = np.atleast_2d(np.asarray(site_positions, dtype=np.float64))
    _, _, centroids = voronoi.lloyd_moments(sites, own_field)
    return clip_speed((centroids[self_idx] - sites[self_idx]) / config.dt,
                      config.max_speed)


class ClairvoyantCVT(Policy):
    name = "clairvoyant"

    def compute_actions(self, world: World, lam: np.ndarray) -> np.ndarray:
        field = combined_field(world.fields, lam)
        return clairvoyant_cvt(world.positions, field, world.config)


class CentralizedCVT(Policy):
    name = "centralized"

    def compute_actions(self, world: World, lam: np.ndarray) -> np.ndarray:
        field = combined_field(world.fields, lam)
        fused = GridField(field.width, field.height, field.resolution,
                          np.where(world.fused_observed_mask(), field.values, 0.0))
        return centralized_cvt(world.positions, fused, world.config)


class DecentralizedCVT(Policy):
    """Each robot runs a local Voronoi against itself and its neighbors on
    its own observed map.  Neighbors share positions only."""

    name = "decentralized"

    def compute_actions(self, world: World, lam: np.ndarray) -> np.ndarray:
        field = combined_field(world.fields, lam)
        graph = comms.build_graph(world.positions, world.config.comm_radius)
        actions = np.zeros((graph.n, 2))
        for i in range(graph.n):
            members = np.sort(np.append(graph.neighbors(i), i))
            self_idx = int(np.searchsorted(members, i))
            own = GridField(field.width, field.height, field.resolution,
                            np.where(world.robots[i].observed, field.values, 0.0))
            actions[i] = decentralized_cvt(
                self_idx, world.positions[members], own, world.config)
        return actions
