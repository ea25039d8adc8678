"""Torch implementation of the coverage policy network.

Layer for layer this mirrors the engine's inference pipeline: three
convolution / batch-norm / leaky-ReLU stages, a linear perception head,
five polynomial graph-filter layers over the communication graph's
normalized shift operator, and a small MLP action head.  Parameters map
one-to-one onto weight bundle tensors so checkpoints are portable.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .formats import (CNN_CHANNELS, FEATURE_DIM, GNN_HOPS, GNN_LAYERS,
                      GNN_WIDTH, MLP_WIDTH, OBS_SIZE, architecture,
                      read_bundle, write_bundle)

LEAKY_SLOPE = 0.01
NORM_EPS = 1e-5


class GraphFilter(nn.Module):
    """One layer of Z = sum_k S^k X H_k with the powers applied by
    iterated propagation."""

    def __init__(self, width_in: int, width_out: int):
        super().__init__()
        self.taps = nn.Parameter(
            torch.randn(GNN_HOPS + 1, width_in, width_out)
            / np.sqrt(width_in * (GNN_HOPS + 1)))

    def forward(self, x: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
        y = x
        z = y @ self.taps[0]
        for k in range(1, GNN_HOPS + 1):
            y = shift @ y
            z = z + y @ self.taps[k]
        return z


class PolicyNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.convs = nn.ModuleList(
            [nn.Conv2d(4 if s == 0 else CNN_CHANNELS, CNN_CHANNELS,
                       kernel_size=3, padding=1) for s in range(3)])
        self.norms = nn.ModuleList(
            [nn.BatchNorm2d(CNN_CHANNELS, eps=NORM_EPS) for _ in range(3)])
        self.perception = nn.Linear(CNN_CHANNELS * OBS_SIZE * OBS_SIZE,
                                    FEATURE_DIM)
        self.filters = nn.ModuleList(
            [GraphFilter(FEATURE_DIM if l == 0 else GNN_WIDTH, GNN_WIDTH)
             for l in range(GNN_LAYERS)])
        self.mlp1 = nn.Linear(GNN_WIDTH, MLP_WIDTH)
        self.mlp2 = nn.Linear(MLP_WIDTH, MLP_WIDTH)
        self.action = nn.Linear(MLP_WIDTH, 2)
        self.leaky = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, observations: torch.Tensor, shift: torch.Tensor
                ) -> torch.Tensor:
        """observations (N, 4, 32, 32) and shift (N, N) -> velocities (N, 2).

        Also accepts a batch of graphs: observations (B, N, 4, 32, 32) with
        shift (B, N, N) -> velocities (B, N, 2).  Graph propagation uses
        matmul broadcasting, so both layouts share one code path.
        """
        x = observations
        batched = x.dim() == 5
        if batched:
            b, n = x.shape[:2]
            x = x.reshape(b * n, *x.shape[2:])
        for conv, norm in zip(self.convs, self.norms):
            x = self.leaky(norm(conv(x)))
        x = self.leaky(self.perception(x.flatten(1)))
        if batched:
            x = x.reshape(b, n, -1)
        for filt in self.filters:
            x = torch.relu(filt(x, shift))
        x = self.leaky(self.mlp1(x))
        x = self.leaky(self.mlp2(x))
        return self.action(x)

    # -- weight bundle mapping -------------------------------------------

    def _tensor_map(self) -> dict[str, torch.Tensor]:
        mapping: dict[str, torch.Tensor] = {}
        for s in range(3):
            mapping[f"conv{s + 1}_weight"] = self.convs[s].weight
            mapping[f"conv{s + 1}_bias"] = self.convs[s].bias
            mapping[f"norm{s + 1}_gamma"] = self.norms[s].weight
            mapping[f"norm{s + 1}_beta"] = self.norms[s].bias
            mapping[f"norm{s + 1}_mean"] = self.norms[s].running_mean
            mapping[f"norm{s + 1}_var"] = self.norms[s].running_var
        mapping["perception_weight"] = self.perception.weight
        mapping["perception_bias"] = self.perception.bias
        for l in range(GNN_LAYERS):
            mapping[f"gnn{l + 1}_weight"] = self.filters[l].taps
        mapping["mlp1_weight"] = self.mlp1.weight
        mapping["mlp1_bias"] = self.mlp1.bias
        mapping["mlp2_weight"] = self.mlp2.weight
        mapping["mlp2_bias"] = self.mlp2.bias
        mapping["action_weight"] = self.action.weight
        mapping["action_bias"] = self.action.bias
        return mapping

    def export_bundle(self, path) -> None:
        """Freeze current parameters and running statistics into a bundle."""
        tensors = {name: t.detach().cpu().numpy().astype(np.float32)
                   for name, t in self._tensor_map().items()}
        write_bundle(tensors, path)

    def load_bundle(self, path) -> None:
        tensors = read_bundle(path)
        expected = architecture()
        with torch.no_grad():
            for name, target in self._tensor_map().items():
                value = torch.from_numpy(tensors[name].astype(np.float32))
                if tuple(target.shape) != expected[name]:
                    raise ValueError(f"{name}: model shape "
                                     f"{tuple(target.shape)} does not match "
                                     f"bundle shape {expected[name]}")
                target.copy_(value)
