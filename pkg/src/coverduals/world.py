"""Environment model: importance density fields, robot kinematics, and local sensing.

The workspace is a square of side ``env_size`` metres discretised into a
regular grid (``resolution`` metres per cell).  Scalar fields live on the
grid; the value of a field at a cell is the field evaluated at the cell
centre.  All randomness flows through a single ``numpy`` Generator with a
documented draw order, so a (seed, config) pair fully determines a run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

GRID_DUMP_MAGIC = b"CDGF"
GRID_DUMP_VERSION = 1


@dataclass
class WorldConfig:
    """Full parameterisation of an environment and a run.

    Defaults follow the standard large-scale setup: a 1024 m square at 1 m
    per cell, 0.5 s steps, 1 m/s speed limit, dual updates every 25 steps.
    """

    env_size: float = 1024.0
    resolution: float = 1.0
    num_robots: int = 32
    num_idfs: int = 4
    comm_radius: float = 256.0
    sensor_size: int = 64
    max_speed: float = 1.0
    dt: float = 0.5
    num_steps: int = 500
    dual_period: int = 25
    dual_step: float = 0.5
    seed: int = 0
    gaussians_per_idf: int = 8
    variance_range: tuple[float, float] = (40.0, 60.0)
    scale_range: tuple[float, float] = (0.05, 1.00)

    @property
    def grid_cells(self) -> int:
        return int(round(self.env_size / self.resolution))

    def validate(self) -> None:
        n = self.env_size / self.resolution
        if abs(n - round(n)) > 1e-9:
            raise ValueError("env_size must be an integer multiple of resolution")
        if self.sensor_size % 2 != 0:
            raise ValueError("sensor_size must be even")
        if self.sensor_size >= self.grid_cells:
            raise ValueError("sensor_size must be smaller than the grid")
        if self.comm_radius <= 0:
            raise ValueError("comm_radius must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dual_period < 1:
            raise ValueError("dual_period must be >= 1")
        if self.num_robots < 1 or self.num_idfs < 1:
            raise ValueError("need at least one robot and one field")
        if self.gaussians_per_idf < 1:
            raise ValueError("gaussians_per_idf must be >= 1")
        lo, hi = self.variance_range
        if not (0 < lo <= hi):
            raise ValueError("bad variance_range")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError("bad scale_range")

    # -- flat key=value config files ------------------------------------

    _SCALARS = {
        "env_size": float, "resolution": float, "comm_radius": float,
        "max_speed": float, "dt": float, "dual_step": float,
        "num_robots": int, "num_idfs": int, "sensor_size": int,
        "num_steps": int, "dual_period": int, "seed": int,
        "gaussians_per_idf": int,
    }
    _PAIRS = {"variance_range", "scale_range"}

    @classmethod
    def from_file(cls, path) -> "WorldConfig":
        """Parse a flat key=value text file.  Unknown keys are rejected."""
        kwargs = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key in cls._SCALARS:
                    kwargs[key] = cls._SCALARS[key](val)
                elif key in cls._PAIRS:
                    parts = [float(p) for p in val.split(",")]
                    if len(parts) != 2:
                        raise ValueError(f"{path}:{lineno}: {key} needs two values")
                    kwargs[key] = (parts[0], parts[1])
                else:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in self._SCALARS:
                fh.write(f"{key} = {getattr(self, key)!r}\n")
            for key in self._PAIRS:
                lo, hi = getattr(self, key)
                fh.write(f"{key} = {lo!r},{hi!r}\n")


@dataclass
class GridField:
    """Nonnegative scalar density on a regular grid.

    ``values`` has shape ``(n, n)`` and is indexed ``values[ix, iy]``; the
    centre of cell ``(ix, iy)`` is at ``((ix + 0.5) * resolution,
    (iy + 0.5) * resolution)``.
    """

    width: int
    height: int
    resolution: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.width, self.height):
            raise ValueError("values shape does not match declared width/height")

    @property
    def cell_area(self) -> float:
        return self.resolution * self.resolution

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def normalize(self) -> "GridField":
        """Scale to unit total mass (sum of values times cell area = 1)."""
        mass = self.total_mass()
        if mass <= 0:
            raise ValueError("cannot normalize a zero field")
        return GridField(self.width, self.height, self.resolution,
                         self.values / mass)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = (np.arange(self.width) + 0.5) * self.resolution
        ys = (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys

    def save(self, path) -> None:
        """Portable binary dump: magic, version, width, height, resolution,
        then the values row-major as little-endian 64-bit floats."""
        with open(path, "wb") as fh:
            fh.write(GRID_DUMP_MAGIC)
            fh.write(struct.pack("<III", GRID_DUMP_VERSION, self.width, self.height))
            fh.write(struct.pack("<d", self.resolution))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != GRID_DUMP_MAGIC:
                raise ValueError("not a grid dump file")
            version, width, height = struct.unpack("<III", fh.read(12))
            if version != GRID_DUMP_VERSION:
                raise ValueError(f"unsupported grid dump version {version}")
            (resolution,) = struct.unpack("<d", fh.read(8))
            body = fh.read(width * height * 8)
            values = np.frombuffer(body, dtype="<f8").reshape(width, height)
        return cls(width, height, resolution, values.copy())


def generate_idf(rng: np.random.Generator, config: WorldConfig) -> GridField:
    """Generate one importance density field.

    The field is a sum of ``gaussians_per_idf`` isotropic 2-D Gaussian bumps
    with means uniform in the workspace, variance uniform in
    ``variance_range`` and an amplitude factor uniform in ``scale_range``.
    Each bump is truncated to exactly zero beyond three standard deviations,
    and the result is rescaled to unit total mass.

    Draw order per bump: mean x, mean y, variance, scale.
    """
    n = config.grid_cells
    res = config.resolution
    xs = (np.arange(n) + 0.5) * res
    values = np.zeros((n, n))
    for _ in range(config.gaussians_per_idf):
        mx = rng.uniform(0.0, config.env_size)
        my = rng.uniform(0.0, config.env_size)
        var = rng.uniform(*config.variance_range)
        scale = rng.uniform(*config.scale_range)
        d2 = (xs - mx)[:, None] ** 2 + (xs - my)[None, :] ** 2
        bump = scale / (2.0 * np.pi * var) * np.exp(-d2 / (2.0 * var))
        bump[d2 > 9.0 * var] = 0.0
        values += bump
    field = GridField(n, n, res, values)
    return field.normalize()


def initial_positions(rng: np.random.Generator, config: WorldConfig) -> np.ndarray:
    """Uniform random positions in the workspace; exact duplicates rejected.

    Draw order per robot: x, y (redrawn on duplicate).
    """
    positions: list[tuple[float, float]] = []
    while len(positions) < config.num_robots:
        p = (rng.uniform(0.0, config.env_size), rng.uniform(0.0, config.env_size))
        if p not in positions:
            positions.append(p)
    return np.array(positions, dtype=np.float64)


def step_dynamics(positions: np.ndarray, actions: np.ndarray,
                  config: WorldConfig) -> np.ndarray:
    """Single-integrator step: clip each action to the speed limit, advance
    ``p + dt * u``, then clamp to the workspace boundary."""
    positions = np.asarray(positions, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if positions.shape != actions.shape:
        raise ValueError("positions and actions must have the same shape")
    clipped = clip_speed(actions, config.max_speed)
    new = positions + config.dt * clipped
    return np.clip(new, 0.0, config.env_size)


def clip_speed(actions: np.ndarray, max_speed: float) -> np.ndarray:
    """Scale each 2-D action so its norm does not exceed ``max_speed``."""
    actions = np.asarray(actions, dtype=np.float64)
    norms = np.linalg.norm(actions, axis=-1, keepdims=True)
    factor = np.ones_like(norms)
    np.divide(max_speed, norms, out=factor, where=norms > max_speed)
    return actions * factor


@dataclass
class RobotState:
    """Per-robot persistent state.

    The sensor reads ground truth exactly, so the per-IDF importance maps
    are represented by a single boolean ``observed`` mask over the grid;
    the observed portion of field ``m`` is the true field masked by it
    (exactness on observed cells holds by construction).
    """

    position: np.ndarray
    observed: np.ndarray
    boundary: np.ndarray
    last_action: np.ndarray = dc_field(default_factory=lambda: np.zeros(2))

    @classmethod
    def fresh(cls, position: np.ndarray, grid_cells: int) -> "RobotState":
        return cls(position=np.asarray(position, dtype=np.float64).copy(),
                   observed=np.zeros((grid_cells, grid_cells), dtype=bool),
                   boundary=np.zeros((grid_cells, grid_cells), dtype=bool))

    def importance_map(self, true_field: GridField) -> np.ndarray:
        """Observed portion of a true field (unobserved cells are zero)."""
        return np.where(self.observed, true_field.values, 0.0)

    @property
    def observed_count(self) -> int:
        return int(self.observed.sum())


def sensor_window(position: np.ndarray, config: WorldConfig
                  ) -> tuple[int, int, int, int]:
    """Grid index bounds (x0, x1, y0, y1) of the sensing window, clipped
    to the workspace."""
    n = config.grid_cells
    half = config.sensor_size // 2
    cx = min(int(position[0] / config.resolution), n - 1)
    cy = min(int(position[1] / config.resolution), n - 1)
    return (max(0, cx - half), min(n, cx + half),
            max(0, cy - half), min(n, cy + half))


def sense(robot: RobotState, config: WorldConfig) -> RobotState:
    """Mark the sensing window around the robot as observed and record any
    workspace-boundary cells inside it.  Idempotent; previously observed
    cells are preserved."""
    n = config.grid_cells
    x0, x1, y0, y1 = sensor_window(robot.position, config)
    robot.observed[x0:x1, y0:y1] = True
    if x0 == 0:
        robot.boundary[0, y0:y1] = True
    if x1 == n:
        robot.boundary[n - 1, y0:y1] = True
    if y0 == 0:
        robot.boundary[x0:x1, 0] = True
    if y1 == n:
        robot.boundary[x0:x1, n - 1] = True
    return robot


# The dual multipliers are constant within a period, so the combined field
# is asked for repeatedly; keep the last result (strong ref keeps ids valid).
_combined_memo: dict = {"key": None, "fields": None, "value": None}


def combined_field(fields: list[GridField], lam: np.ndarray) -> GridField:
    """Pointwise linear combination of fields with nonnegative weights."""
    lam = np.asarray(lam, dtype=np.float64)
    key = (tuple(id(f) for f in fields), lam.tobytes())
    if _combined_memo["key"] == key:
        return _combined_memo["value"]
    if lam.ndim != 1 or len(fields) != lam.shape[0]:
        raise ValueError("need one weight per field")
    if np.any(lam < 0):
        raise ValueError("weights must be nonnegative")
    first = fields[0]
    values = np.zeros_like(first.values)
    for f, w in zip(fields, lam):
        if f.values.shape != first.values.shape or f.resolution != first.resolution:
            raise ValueError("fields must share shape and resolution")
        values += w * f.values
    result = GridField(first.width, first.height, first.resolution, values)
    _combined_memo["key"] = key
    _combined_memo["fields"] = list(fields)
    _combined_memo["value"] = result
    return result


class World:
    """Mutable simulation state: fields, robot positions and robot maps."""

    def __init__(self, config: WorldConfig, fields: list[GridField],
                 positions: np.ndarray, rng: np.random.Generator):
        self.config = config
        self.fields = fields
        self.positions = np.asarray(positions, dtype=np.float64)
        self.rng = rng
        n = config.grid_cells
        self.robots = [RobotState.fresh(p, n) for p in self.positions]

    @classmethod
    def from_config(cls, config: WorldConfig) -> "World":
        """Build a seeded world.  Draw order: all fields (in index order),
        then all initial positions."""
        config.validate()
        rng = np.random.default_rng(config.seed)
        fields = [generate_idf(rng, config) for _ in range(config.num_idfs)]
        positions = initial_positions(rng, config)
        return cls(config, fields, positions, rng)

    def sense_all(self) -> None:
        for robot in self.robots:
            sense(robot, self.config)

    def step(self, actions: np.ndarray) -> None:
        """Apply actions in robot-index order and update robot states."""
        clipped = clip_speed(actions, self.config.max_speed)
        self.positions = step_dynamics(self.positions, clipped, self.config)
        for i, robot in enumerate(self.robots):
            robot.position = self.positions[i].copy()
            robot.last_action = clipped[i].copy()

    def fused_observed_mask(self) -> np.ndarray:
        """Union of all robots' observed cells."""
        mask = np.zeros_like(self.robots[0].observed)
        for robot in self.robots:
            np.logical_or(mask, robot.observed, out=mask)
        return mask
