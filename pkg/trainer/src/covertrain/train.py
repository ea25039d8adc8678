"""Imitation training loop.

Each recorded step is one graph sample: the robot observations, the
communication edges, and the teacher velocities.  Steps are grouped into
minibatches of roughly ``batch_size`` robot records, the network minimizes
mean squared error against the teacher with Adam, and the checkpoint with
the lowest validation loss is written as a weight bundle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields as dc_fields

import numpy as np
import torch

from .formats import read_dataset, shift_from_edges
from .model import PolicyNet

log = logging.getLogger("covertrain")


@dataclass
class TrainConfig:
    """``dataset`` may list several container files separated by commas
    (each container records one environment)."""

    dataset: str = ""
    output: str = "policy.weights"
    epochs: int = 100
    batch_size: int = 100
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    validation_split: float = 0.1
    seed: int = 0

    _TYPES = {"dataset": str, "output": str, "epochs": int,
              "batch_size": int, "learning_rate": float,
              "weight_decay": float, "validation_split": float, "seed": int}

    def validate(self) -> None:
        if not self.dataset:
            raise ValueError("dataset path is required")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.validation_split < 1.0:
            raise ValueError("validation_split must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        known = {f.name for f in dc_fields(cls) if not f.name.startswith("_")}
        config = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                setattr(config, key, cls._TYPES[key](val))
        config.validate()
        return config


def _read_many(paths) -> list[dict]:
    steps = []
    for path in str(paths).split(","):
        steps.extend(read_dataset(path.strip()))
    return steps


def _to_samples(steps: list[dict]) -> list[tuple]:
    samples = []
    for record in steps:
        n = record["observations"].shape[0]
        obs = torch.from_numpy(record["observations"].astype(np.float32))
        shift = torch.from_numpy(
            shift_from_edges(n, record["edges"]).astype(np.float32))
        tgt = torch.from_numpy(record["targets"].astype(np.float32))
        samples.append((obs, shift, tgt))
    return samples


def _stack(batch: list[tuple]) -> tuple:
    """Stack equal-size graph samples into one batched forward pass."""
    obs = torch.stack([s[0] for s in batch])
    shifts = torch.stack([s[1] for s in batch])
    targets = torch.stack([s[2] for s in batch])
    return obs, shifts, targets


def dataset_mse(model: PolicyNet, samples: list[tuple]) -> float:
    """Mean squared error per velocity component over every robot record."""
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for start in range(0, len(samples), 32):
            chunk = samples[start:start + 32]
            if len({s[0].shape[0] for s in chunk}) == 1:
                obs, shifts, targets = _stack(chunk)
                pred = model(obs, shifts)
            else:
                pred = torch.cat([model(o, sh) for o, sh, _ in chunk])
                targets = torch.cat([t for _, _, t in chunk])
            total += torch.sum((pred - targets) ** 2).item()
            count += targets.numel()
    return total / count


def train(config: TrainConfig) -> tuple[float, float]:
    """Run imitation training; returns (best validation MSE, final train MSE).

    The best-validation checkpoint is written to ``config.output`` in
    weight bundle format (atomically, so a crash never leaves a torn file).
    """
    config.validate()
    torch.manual_seed(config.seed)
    samples = _to_samples(_read_many(config.dataset))
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(samples))
    n_val = max(1, int(round(config.validation_split * len(samples)))) \
        if len(samples) > 1 else 0
    val = [samples[i] for i in order[:n_val]]
    tra = [samples[i] for i in order[n_val:]]
    if not tra:
        tra, val = val, []
    robots_per_step = samples[0][2].shape[0]
    steps_per_batch = max(1, config.batch_size // robots_per_step)

    model = PolicyNet()
    optimizer = torch.optim.Adam(model.parameters(),
                                 lr=config.learning_rate,
                                 weight_decay=config.weight_decay)
    best_val = float("inf")
    for epoch in range(config.epochs):
        model.train()
        epoch_order = rng.permutation(len(tra))
        for start in range(0, len(tra), steps_per_batch):
            batch = [tra[i] for i in epoch_order[start:start + steps_per_batch]]
            optimizer.zero_grad()
            if len({s[0].shape[0] for s in batch}) == 1:
                obs, shifts, targets = _stack(batch)
                loss = torch.mean((model(obs, shifts) - targets) ** 2)
            else:
                loss = sum(torch.mean((model(o, sh) - t) ** 2)
                           for o, sh, t in batch) / len(batch)
            loss.backward()
            optimizer.step()
        score = dataset_mse(model, val if val else tra)
        if score < best_val:
            best_val = score
            model.export_bundle(config.output)
        log.info("epoch %d: validation MSE %.6g (best %.6g)",
                 epoch, score, best_val)
    return best_val, dataset_mse(model, tra)


def evaluate(bundle_path, dataset_path) -> float:
    """MSE of a stored bundle against a dataset's teacher targets."""
    model = PolicyNet()
    model.load_bundle(bundle_path)
    return dataset_mse(model, _to_samples(_read_many(dataset_path)))
