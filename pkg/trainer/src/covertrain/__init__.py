"""Imitation trainer for the coverage policy.

Reads the engine's imitation dataset container, trains a torch mirror of
the policy network with Adam on mean squared error, and writes the
best-validation checkpoint in the portable weight bundle format.
"""

from .formats import (architecture, read_bundle, read_dataset,
                      shift_from_edges, write_bundle)
from .model import PolicyNet
from .train import TrainConfig, dataset_mse, evaluate, train

__version__ = "0.1.0"
