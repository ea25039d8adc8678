"""Inference-only perception-action-communication policy.

Per robot: a four-channel 32x32 observation (own density window, boundary
window, neighbor relative coordinates) feeds a three-stage CNN producing a
32-feature vector; features from all robots are mixed by a five-layer graph
filter bank over the communication graph's normalized shift operator; a
small MLP maps each robot's 512 features to a 2-D velocity.

Weights come from an immutable bundle file (text manifest plus little-endian
float32 payload) written by the trainer.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import comms
from .controllers import Policy, clairvoyant_cvt
from .world import GridField, RobotState, World, WorldConfig, clip_speed, combined_field

OBS_SIZE = 32           # observation image side, pixels
WINDOW_CELLS = 256      # raw local window side, grid cells
POOL = WINDOW_CELLS // OBS_SIZE
CNN_CHANNELS = 32
FEATURE_DIM = 32        # perception output width
GNN_HOPS = 3            # filter taps beyond the self term
GNN_LAYERS = 5
GNN_WIDTH = 512
MLP_WIDTH = 32
LEAKY_SLOPE = 0.01
NORM_EPS = 1e-5

WEIGHTS_MAGIC = "COVERDUALS-WEIGHTS"
DATASET_MAGIC = "COVERDUALS-DATASET"
FORMAT_VERSION = 1


def architecture() -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape table of every tensor in a weight bundle."""
    shapes: dict[str, tuple[int, ...]] = {}
    in_ch = 4
    for stage in (1, 2, 3):
        shapes[f"conv{stage}_weight"] = (CNN_CHANNELS, in_ch, 3, 3)
        shapes[f"conv{stage}_bias"] = (CNN_CHANNELS,)
        for stat in ("gamma", "beta", "mean", "var"):
            shapes[f"norm{stage}_{stat}"] = (CNN_CHANNELS,)
        in_ch = CNN_CHANNELS
    shapes["perception_weight"] = (FEATURE_DIM, CNN_CHANNELS * OBS_SIZE * OBS_SIZE)
    shapes["perception_bias"] = (FEATURE_DIM,)
    width_in = FEATURE_DIM
    for layer in range(1, GNN_LAYERS + 1):
        shapes[f"gnn{layer}_weight"] = (GNN_HOPS + 1, width_in, GNN_WIDTH)
        width_in = GNN_WIDTH
    shapes["mlp1_weight"] = (MLP_WIDTH, GNN_WIDTH)
    shapes["mlp1_bias"] = (MLP_WIDTH,)
    shapes["mlp2_weight"] = (MLP_WIDTH, MLP_WIDTH)
    shapes["mlp2_bias"] = (MLP_WIDTH,)
    shapes["action_weight"] = (2, MLP_WIDTH)
    shapes["action_bias"] = (2,)
    return shapes


@dataclass
class WeightBundle:
    """Named float32 tensors matching :func:`architecture` exactly."""

    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        expected = architecture()
        if set(self.tensors) != set(expected):
            missing = set(expected) - set(self.tensors)
            extra = set(self.tensors) - set(expected)
            raise ValueError(f"bundle mismatch: missing={sorted(missing)} "
                             f"extra={sorted(extra)}")
        for name, shape in expected.items():
            t = np.asarray(self.tensors[name], dtype=np.float32)
            if t.shape != shape:
                raise ValueError(f"{name}: shape {t.shape}, expected {shape}")
            self.tensors[name] = t
        for stage in (1, 2, 3):
            if np.any(self.tensors[f"norm{stage}_var"] <= 0):
                raise ValueError(f"norm{stage}_var must be positive")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def save(self, path) -> None:
        """Manifest (tensor name, shape, byte offset into the payload)
        followed by the row-major little-endian float32 payloads."""
        lines = [f"{WEIGHTS_MAGIC} {FORMAT_VERSION}"]
        offset = 0
        order = list(architecture())
        for name in order:
            t = self.tensors[name]
            shape = ",".join(str(s) for s in t.shape)
            lines.append(f"tensor {name} {shape} {offset}")
            offset += t.size * 4
        lines.append("end")
        with open(path, "wb") as fh:
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
            for name in order:
                fh.write(np.ascontiguousarray(
                    self.tensors[name], dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "WeightBundle":
        with open(path, "rb") as fh:
            data = fh.read()
        head, _, payload = data.partition(b"end\n")
        lines = head.decode("ascii").splitlines()
        if not lines or not lines[0].startswith(WEIGHTS_MAGIC):
            raise ValueError("not a weight bundle file")
        version = int(lines[0].split()[1])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported bundle version {version}")
        tensors = {}
        for line in lines[1:]:
            _, name, shape_s, offset_s = line.split()
            shape = tuple(int(s) for s in shape_s.split(","))
            offset = int(offset_s)
            count = int(np.prod(shape))
            raw = payload[offset:offset + count * 4]
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        return cls(tensors)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0) -> "WeightBundle":
        """Random bundle (fan-in scaled weights, unit norm statistics)."""
        tensors = {}
        for name, shape in architecture().items():
            if name.endswith("_bias") or name.endswith("_beta") \
                    or name.endswith("_mean"):
                tensors[name] = np.zeros(shape, dtype=np.float32)
            elif name.endswith("_gamma") or name.endswith("_var"):
                tensors[name] = np.ones(shape, dtype=np.float32)
            else:
                fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
                tensors[name] = (scale / np.sqrt(fan_in) *
                                 rng.standard_normal(shape)).astype(np.float32)
        return cls(tensors)


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def build_observation(robot: RobotState, combined: GridField,
                      neighbor_positions: np.ndarray,
                      config: WorldConfig) -> np.ndarray:
    """Four-channel 32x32 observation for one robot.

    Channels 0/1: the 256x256-cell window around the robot from its own
    observed portion of the combined density and from its boundary map,
    zero beyond the workspace, average-pooled 8x8.  Channel 0 is scaled by
    its own maximum so densities are O(1) regardless of field mass.
    Channels 2/3: each neighbor rasterised at pixel round(16 + 16*d/r_c)
    holding (dx/r_c, dy/r_c); on pixel collisions the nearest neighbor wins.
    """
    n = config.grid_cells
    half = WINDOW_CELLS // 2
    cx = min(int(robot.position[0] / config.resolution), n - 1)
    cy = min(int(robot.position[1] / config.resolution), n - 1)
    x0, x1 = max(0, cx - half), min(n, cx + half)
    y0, y1 = max(0, cy - half), min(n, cy + half)
    ox, oy = x0 - (cx - half), y0 - (cy - half)

    obs = np.zeros((4, OBS_SIZE, OBS_SIZE))
    patch = np.zeros((WINDOW_CELLS, WINDOW_CELLS))
    patch[ox:ox + (x1 - x0), oy:oy + (y1 - y0)] = np.where(
        robot.observed[x0:x1, y0:y1], combined.values[x0:x1, y0:y1], 0.0)
    pooled = patch.reshape(OBS_SIZE, POOL, OBS_SIZE, POOL).mean(axis=(1, 3))
    peak = pooled.max()
    obs[0] = pooled / peak if peak > 0 else pooled

    patch[:] = 0.0
    patch[ox:ox + (x1 - x0), oy:oy + (y1 - y0)] = robot.boundary[x0:x1, y0:y1]
    obs[1] = patch.reshape(OBS_SIZE, POOL, OBS_SIZE, POOL).mean(axis=(1, 3))

    neighbor_positions = np.atleast_2d(
        np.asarray(neighbor_positions, dtype=np.float64).reshape(-1, 2))
    rc = config.comm_radius
    best = np.full((OBS_SIZE, OBS_SIZE), np.inf)
    for pj in neighbor_positions:
        delta = pj - robot.position
        px = int(np.clip(round(16 + 16 * delta[0] / rc), 0, OBS_SIZE - 1))
        py = int(np.clip(round(16 + 16 * delta[1] / rc), 0, OBS_SIZE - 1))
        dist = float(np.hypot(*delta))
        if dist < best[px, py]:
            best[px, py] = dist
            obs[2, px, py] = delta[0] / rc
            obs[3, px, py] = delta[1] / rc
    return obs


def _conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution with zero padding; x is (C, H, W)."""
    c, h, w = x.shape
    xp = np.zeros((c, h + 2, w + 2))
    xp[:, 1:-1, 1:-1] = x
    # patch index n = 3*di + dj matches the reshaped kernel's last axis
    patches = np.stack([xp[:, di:di + h, dj:dj + w]
                        for di in range(3) for dj in range(3)])  # (9, C, H, W)
    w9 = weight.astype(np.float64).reshape(weight.shape[0], c, 9)
    out = np.einsum("ocn,ncij->oij", w9, patches)
    return out + bias[:, None, None]


def cnn_forward(observation: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Three conv/normalize/leaky-ReLU stages, flatten, linear, leaky ReLU.

    Normalization always uses the bundle's stored statistics (inference
    mode); batch statistics are never computed.
    """
    x = np.asarray(observation, dtype=np.float64)
    for stage in (1, 2, 3):
        x = _conv3x3(x, weights[f"conv{stage}_weight"],
                     weights[f"conv{stage}_bias"].astype(np.float64))
        mean = weights[f"norm{stage}_mean"].astype(np.float64)
        var = weights[f"norm{stage}_var"].astype(np.float64)
        gamma = weights[f"norm{stage}_gamma"].astype(np.float64)
        beta = weights[f"norm{stage}_beta"].astype(np.float64)
        x = (x - mean[:, None, None]) / np.sqrt(var + NORM_EPS)[:, None, None]
        x = gamma[:, None, None] * x + beta[:, None, None]
        x = _leaky(x)
    flat = x.reshape(-1)
    out = weights["perception_weight"].astype(np.float64) @ flat \
        + weights["perception_bias"].astype(np.float64)
    return _leaky(out)


def gnn_forward(features: np.ndarray, shift: np.ndarray,
                weights: WeightBundle) -> np.ndarray:
    """Five graph-filter layers: Z_l = sum_k S^k X_{l-1} H_{lk}, X_l = ReLU(Z_l).

    Powers of the shift operator are applied by iterated propagation
    (Y_k = S Y_{k-1}), never materialised.
    """
    x = np.asarray(features, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if x.shape[0] != shift.shape[0]:
        raise ValueError("one feature row per graph node required")
    for layer in range(1, GNN_LAYERS + 1):
        taps = weights[f"gnn{layer}_weight"].astype(np.float64)
        if x.shape[1] != taps.shape[1]:
            raise ValueError(f"layer {layer}: feature width {x.shape[1]} "
                             f"does not match taps {taps.shape[1]}")
        y = x
        z = y @ taps[0]
        for k in range(1, GNN_HOPS + 1):
            y = shift @ y
            z += y @ taps[k]
        x = np.maximum(z, 0.0)
    return x


def mlp_forward(feature: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Two leaky-ReLU layers then a linear head to a 2-D velocity."""
    x = np.asarray(feature, dtype=np.float64)
    x = _leaky(x @ weights["mlp1_weight"].T.astype(np.float64)
               + weights["mlp1_bias"].astype(np.float64))
    x = _leaky(x @ weights["mlp2_weight"].T.astype(np.float64)
               + weights["mlp2_bias"].astype(np.float64))
    return x @ weights["action_weight"].T.astype(np.float64) \
        + weights["action_bias"].astype(np.float64)


class LpacPolicy(Policy):
    """Full pipeline: observation -> CNN -> graph filters -> MLP -> clip."""

    name = "lpac"

    def __init__(self, weights: WeightBundle):
        self.weights = weights

    def compute_actions(self, world: World, lam: np.ndarray) -> np.ndarray:
        field = combined_field(world.fields, lam)
        graph = comms.build_graph(world.positions, world.config.comm_radius)
        shift = comms.shift_operator(graph)
        features = np.empty((graph.n, FEATURE_DIM))
        for i, robot in enumerate(world.robots):
            obs = build_observation(robot, field,
                                    world.positions[graph.neighbors(i)],
                                    world.config)
            features[i] = cnn_forward(obs, self.weights)
        node_feats = gnn_forward(features, shift, self.weights)
        actions = mlp_forward(node_feats, self.weights)
        return clip_speed(actions, world.config.max_speed)


# -- imitation dataset container ----------------------------------------


def export_imitation_dataset(world: World, steps: int, path,
                             lam: np.ndarray | None = None) -> None:
    """Roll the clairvoyant teacher for ``steps`` and record, per step and
    robot, the decentralized observation, the communication edge list, and
    the teacher's velocity as the target.

    Container layout: text manifest (magic/version, sizes, per-step edge
    lists, per-record payload offsets), then all observations and all
    targets as row-major little-endian float32.
    """
    config = world.config
    n = config.num_robots
    if lam is None:
        lam = np.full(len(world.fields), 1.0 / len(world.fields))
    field = combined_field(world.fields, lam)

    manifest = io.StringIO()
    manifest.write(f"{DATASET_MAGIC} {FORMAT_VERSION}\n")
    manifest.write(f"num_steps {steps}\n")
    manifest.write(f"num_robots {n}\n")
    manifest.write(f"obs_shape 4,{OBS_SIZE},{OBS_SIZE}\n")
    obs_block = io.BytesIO()
    tgt_block = io.BytesIO()
    obs_bytes = 4 * OBS_SIZE * OBS_SIZE * 4
    for step in range(steps):
        world.sense_all()
        graph = comms.build_graph(world.positions, config.comm_radius)
        targets = clairvoyant_cvt(world.positions, field, config)
        pairs = ",".join(f"{i}-{j}" for i, j in graph.edges)
        manifest.write(f"edges {step} {pairs}\n")
        for i, robot in enumerate(world.robots):
            obs = build_observation(robot, field,
                                    world.positions[graph.neighbors(i)],
                                    config)
            manifest.write(f"record {step} {i} "
                           f"{(step * n + i) * obs_bytes} "
                           f"{(step * n + i) * 8}\n")
            obs_block.write(np.ascontiguousarray(obs, dtype="<f4").tobytes())
            tgt_block.write(np.ascontiguousarray(
                targets[i], dtype="<f4").tobytes())
        world.step(targets)
    manifest.write("end\n")
    with open(path, "wb") as fh:
        fh.write(manifest.getvalue().encode("ascii"))
        fh.write(obs_block.getvalue())
        fh.write(tgt_block.getvalue())


def load_imitation_dataset(path) -> list[dict]:
    """Read a dataset container back as one dict per step:
    observations (N, 4, 32, 32), edges (E, 2), targets (N, 2)."""
    with open(path, "rb") as fh:
        data = fh.read()
    head, _, payload = data.partition(b"end\n")
    lines = head.decode("ascii").splitlines()
    if not lines or not lines[0].startswith(DATASET_MAGIC):
        raise ValueError("not a dataset container")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    meta = dict(line.split(" ", 1) for line in lines[1:4])
    steps = int(meta["num_steps"])
    n = int(meta["num_robots"])
    obs_count = 4 * OBS_SIZE * OBS_SIZE
    obs_bytes_total = steps * n * obs_count * 4
    observations = np.frombuffer(payload[:obs_bytes_total], dtype="<f4")
    observations = observations.reshape(steps, n, 4, OBS_SIZE, OBS_SIZE)
    targets = np.frombuffer(
        payload[obs_bytes_total:obs_bytes_total + steps * n * 8],
        dtype="<f4").reshape(steps, n, 2)
    edges_by_step: dict[int, np.ndarray] = {}
    for line in lines[4:]:
        if line.startswith("edges "):
            _, step_s, rest = (line.split(" ", 2) + [""])[:3]
            pairs = [tuple(int(v) for v in p.split("-"))
                     for p in rest.split(",") if p]
            edges_by_step[int(step_s)] = np.array(pairs, dtype=np.int64
                                                  ).reshape(-1, 2)
    return [{"observations": observations[s].astype(np.float64),
             "edges": edges_by_step.get(s, np.zeros((0, 2), dtype=np.int64)),
             "targets": targets[s].astype(np.float64)}
            for s in range(steps)]


def shift_from_edges(n: int, edges: np.ndarray) -> np.ndarray:
    """Rebuild the normalized shift operator from a stored edge list."""
    adjacency = np.zeros((n, n))
    for i, j in np.atleast_2d(edges.reshape(-1, 2)):
        adjacency[i, j] = adjacency[j, i] = 1.0
    degrees = adjacency.sum(axis=1)
    inv_sqrt = np.zeros(n)
    np.divide(1.0, np.sqrt(degrees), out=inv_sqrt, where=degrees > 0)
    return inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]
