"""Readers and writers for the engine's portable file formats.

The trainer exchanges data with the coverage engine only through two
files: the imitation dataset container and the weight bundle.  Both are a
short ASCII manifest followed by row-major little-endian float32 payloads,
so they are implemented here independently of the engine's code.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

WEIGHTS_MAGIC = "COVERDUALS-WEIGHTS"
DATASET_MAGIC = "COVERDUALS-DATASET"
FORMAT_VERSION = 1

OBS_SIZE = 32
CNN_CHANNELS = 32
FEATURE_DIM = 32
GNN_HOPS = 3
GNN_LAYERS = 5
GNN_WIDTH = 512
MLP_WIDTH = 32


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


def write_bundle(tensors: dict[str, np.ndarray], path) -> None:
    """Write a weight bundle atomically (temp file, then rename)."""
    expected = architecture()
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise ValueError(f"bundle mismatch: missing={missing} extra={extra}")
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise ValueError(f"{name}: shape {tuple(tensors[name].shape)}, "
                             f"expected {shape}")
    lines = [f"{WEIGHTS_MAGIC} {FORMAT_VERSION}"]
    offset = 0
    order = list(expected)
    for name in order:
        shape = ",".join(str(s) for s in tensors[name].shape)
        lines.append(f"tensor {name} {shape} {offset}")
        offset += int(np.prod(tensors[name].shape)) * 4
    lines.append("end")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
            for name in order:
                fh.write(np.ascontiguousarray(
                    tensors[name], dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_bundle(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    head, _, payload = data.partition(b"end\n")
    lines = head.decode("ascii").splitlines()
    if not lines or not lines[0].startswith(WEIGHTS_MAGIC):
        raise ValueError("not a weight bundle file")
    version = int(lines[0].split()[1])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported bundle version {version}")
    expected = architecture()
    tensors = {}
    for line in lines[1:]:
        _, name, shape_s, offset_s = line.split()
        shape = tuple(int(s) for s in shape_s.split(","))
        if name not in expected or shape != expected[name]:
            raise ValueError(f"unexpected tensor {name} with shape {shape}")
        count = int(np.prod(shape))
        offset = int(offset_s)
        tensors[name] = np.frombuffer(
            payload[offset:offset + count * 4], dtype="<f4"
        ).reshape(shape).copy()
    if set(tensors) != set(expected):
        raise ValueError("bundle is missing tensors")
    return tensors


def read_dataset(path) -> list[dict]:
    """Load an imitation dataset container: one dict per recorded step with
    float32 observations (N, 4, 32, 32), an (E, 2) edge list, and float32
    teacher targets (N, 2)."""
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
    obs_shape = tuple(int(v) for v in meta["obs_shape"].split(","))
    if obs_shape != (4, OBS_SIZE, OBS_SIZE):
        raise ValueError(f"unsupported observation shape {obs_shape}")
    obs_count = int(np.prod(obs_shape))
    obs_total = steps * n * obs_count * 4
    observations = np.frombuffer(payload[:obs_total], dtype="<f4").reshape(
        steps, n, *obs_shape)
    targets = np.frombuffer(payload[obs_total:obs_total + steps * n * 8],
                            dtype="<f4").reshape(steps, n, 2)
    edges_by_step: dict[int, np.ndarray] = {}
    for line in lines[4:]:
        if line.startswith("edges "):
            _, step_s, rest = (line.split(" ", 2) + [""])[:3]
            pairs = [tuple(int(v) for v in p.split("-"))
                     for p in rest.split(",") if p]
            edges_by_step[int(step_s)] = np.array(
                pairs, dtype=np.int64).reshape(-1, 2)
    return [{"observations": observations[s].copy(),
             "edges": edges_by_step.get(s, np.zeros((0, 2), dtype=np.int64)),
             "targets": targets[s].copy()}
            for s in range(steps)]


def shift_from_edges(n: int, edges: np.ndarray) -> np.ndarray:
    """Degree-normalized adjacency; isolated nodes get zero rows."""
    adjacency = np.zeros((n, n))
    for i, j in np.atleast_2d(edges.reshape(-1, 2)):
        adjacency[i, j] = adjacency[j, i] = 1.0
    degrees = adjacency.sum(axis=1)
    inv_sqrt = np.zeros(n)
    np.divide(1.0, np.sqrt(degrees), out=inv_sqrt, where=degrees > 0)
    return inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]
