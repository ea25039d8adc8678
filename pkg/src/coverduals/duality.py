"""Primal-dual outer loop for fair and constrained multi-objective coverage.

Two time scales: the primal policy runs every step on the field combined
with the current multipliers; every ``period`` steps the multipliers move
along the windowed slackness and are projected (fair mode: onto the
probability simplex; constrained mode: multipliers only stay nonnegative).

Per-field costs entering the slackness and the logs are true coverage
costs normalised by each field's inertia (second moment about its own
centroid), which makes them O(1) and comparable across fields and
environment sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import voronoi
from .controllers import Policy
from .world import World


def slack_fair(window: np.ndarray, period: int) -> np.ndarray:
    """Fair slackness: per-field mean cost over one dual window."""
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if window.shape[0] != period:
        raise RuntimeError(
            f"window holds {window.shape[0]} steps, expected {period}")
    return window.mean(axis=0)


def slack_constrained(window: np.ndarray, alpha: np.ndarray,
                      period: int) -> np.ndarray:
    """Constrained slackness: windowed mean cost minus the threshold."""
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if window.shape[0] != period:
        raise RuntimeError(
            f"window holds {window.shape[0]} steps, expected {period}")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] != window.shape[1]:
        raise ValueError("one threshold per field required")
    return window.mean(axis=0) - alpha


def dual_update(lam: np.ndarray, slack: np.ndarray, eta: float) -> np.ndarray:
    """Projected-gradient ascent step on the multipliers:
    lam_i <- max(0, lam_i + eta * s_i)."""
    if eta <= 0:
        raise ValueError("dual step size must be positive")
    lam = np.asarray(lam, dtype=np.float64)
    return np.maximum(0.0, lam + eta * np.asarray(slack, dtype=np.float64))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum x = 1}.

    Sort-and-threshold: with u the descending sort of v, find the largest
    rho with u_rho - (cumsum(u)_rho - 1) / rho > 0 and subtract that
    threshold, clamping at zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a nonempty vector")
    # points already on the simplex (to rounding) pass through untouched,
    # which makes the projection exactly idempotent
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u - cssv / idx > 0)[0][-1])
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class DualState:
    """Multiplier state for one run."""

    mode: str                      # "fair" | "constrained"
    lam: np.ndarray
    eta: float
    period: int
    alpha: Optional[np.ndarray] = None
    frozen: bool = False           # keep lam fixed (baseline runs)
    window: list = dc_field(default_factory=list)
    k: int = 0

    def __post_init__(self):
        if self.mode not in ("fair", "constrained"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.lam = np.asarray(self.lam, dtype=np.float64)
        if np.any(self.lam < 0):
            raise ValueError("multipliers must be nonnegative")
        if self.mode == "constrained":
            if self.alpha is None:
                raise ValueError("constrained mode needs thresholds")
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if self.alpha.shape != self.lam.shape:
                raise ValueError("one threshold per multiplier required")

    @classmethod
    def fair(cls, num_fields: int, eta: float = 0.5, period: int = 25,
             frozen: bool = False) -> "DualState":
        """Fair mode starts from the uniform point of the simplex."""
        return cls("fair", np.full(num_fields, 1.0 / num_fields), eta, period,
                   frozen=frozen)

    @classmethod
    def constrained(cls, alpha: np.ndarray, eta: float = 0.2,
                    period: int = 25) -> "DualState":
        """Constrained (feasibility) mode starts from zero multipliers."""
        alpha = np.asarray(alpha, dtype=np.float64)
        return cls("constrained", np.zeros_like(alpha), eta, period,
                   alpha=alpha)

    def advance(self) -> np.ndarray:
        """Consume the full window: one dual update plus projection."""
        window = np.array(self.window)
        if self.mode == "fair":
            slack = slack_fair(window, self.period)
        else:
            slack = slack_constrained(window, self.alpha, self.period)
        if not self.frozen:
            lam = dual_update(self.lam, slack, self.eta)
            self.lam = project_simplex(lam) if self.mode == "fair" else lam
        self.window = []
        self.k += 1
        return slack


@dataclass
class RunResult:
    """Per-step and per-period logs of one primal-dual run."""

    costs: np.ndarray        # (num_steps, M) normalised true per-field costs
    lambdas: np.ndarray      # (K + 1, M) multipliers, index 0 = initial
    slacks: np.ndarray       # (K, M)
    trajectory: np.ndarray   # (num_steps, N, 2)
    normalizers: np.ndarray  # (M,) per-field inertia used to normalise

    @property
    def max_costs(self) -> np.ndarray:
        return self.costs.max(axis=1)

    def final_window_mean(self, period: int) -> np.ndarray:
        return self.costs[-period:].mean(axis=0)


def run_primal_dual(policy: Policy, world: World, dual: DualState) -> RunResult:
    """Algorithm: K dual periods of T primal steps each.

    Within a period the combined field is weighted by the current
    multipliers; every step the policy acts, the world advances, and the
    true normalised per-field costs are accumulated into the dual window.
    At the end of each period the multipliers are updated and projected.
    """
    config = world.config
    period = dual.period
    if config.num_steps % period != 0:
        raise RuntimeError("num_steps must be a multiple of the dual period")
    num_dual = config.num_steps // period
    m = len(world.fields)
    if dual.lam.shape[0] != m:
        raise ValueError("one multiplier per field required")

    normalizers = np.array([voronoi.field_inertia(f) for f in world.fields])
    costs = np.empty((config.num_steps, m))
    lambdas = np.empty((num_dual + 1, m))
    slacks = np.empty((num_dual, m))
    trajectory = np.empty((config.num_steps, config.num_robots, 2))
    lambdas[0] = dual.lam

    step = 0
    for k in range(num_dual):
        for _ in range(period):
            world.sense_all()
            actions = policy.compute_actions(world, dual.lam)
            # costs are logged at the pre-action state X(t); a policy that
            # just partitioned the same positions shares the kernel call
            part = voronoi.partition(world.positions, config.grid_cells,
                                     config.resolution)
            costs[step] = voronoi.per_field_costs(part, world.fields) / normalizers
            dual.window.append(costs[step])
            trajectory[step] = world.positions
            world.step(actions)
            step += 1
        slacks[k] = dual.advance()
        lambdas[k + 1] = dual.lam

    return RunResult(costs, lambdas, slacks, trajectory, normalizers)
