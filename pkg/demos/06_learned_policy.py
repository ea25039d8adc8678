"""
The learned decentralized policy and its data pipeline
======================================================

Each robot builds a four-channel local image (observed density, workspace
boundary, neighbor coordinates), encodes it with a small CNN, exchanges
features over the communication graph through polynomial graph filters,
and decodes a velocity with an MLP.  Weights load from a portable bundle
file; training data is exported by rolling the all-knowing centroid
controller as the teacher.
"""

import tempfile
from pathlib import Path

import numpy as np

from coverduals import World, WorldConfig, combined_field
from coverduals.lpac import (LpacPolicy, WeightBundle, architecture,
                             build_observation, export_imitation_dataset,
                             load_imitation_dataset)
from coverduals import comms

config = WorldConfig(env_size=128, resolution=1.0, num_robots=6, num_idfs=2,
                     comm_radius=48, sensor_size=32, seed=5)
config.validate()

shapes = architecture()
total = sum(int(np.prod(s)) for s in shapes.values())
print(f"policy tensors: {len(shapes)}, parameters: {total:,}")

world = World.from_config(config)
world.sense_all()
lam = np.array([0.5, 0.5])
field = combined_field(world.fields, lam)
graph = comms.build_graph(world.positions, config.comm_radius)
obs = build_observation(world.robots[0], field,
                        world.positions[graph.neighbors(0)], config)
print(f"observation shape: {obs.shape}, density peak {obs[0].max():.2f}, "
      f"{np.count_nonzero(obs[2])} rasterized neighbors")

with tempfile.TemporaryDirectory() as tmp:
    bundle_path = Path(tmp) / "policy.weights"
    WeightBundle.random(np.random.default_rng(1), scale=0.3).save(bundle_path)
    policy = LpacPolicy(WeightBundle.load(bundle_path))
    actions = policy.compute_actions(world, lam)
    # random fan-in-scaled weights attenuate through the deep filter bank,
    # so an untrained policy barely moves; training is what adds signal
    print(f"untrained bundle: max commanded speed "
          f"{np.hypot(*actions.T).max():.2e} "
          f"(speed limit {config.max_speed})")

    dataset_path = Path(tmp) / "imitation.dataset"
    export_imitation_dataset(World.from_config(config), steps=20,
                             path=dataset_path)
    steps = load_imitation_dataset(dataset_path)
    print(f"\nexported {len(steps)} steps x {config.num_robots} robots "
          f"({dataset_path.stat().st_size / 1e6:.1f} MB)")
    print("first step:", steps[0]["observations"].shape, "observations,",
          len(steps[0]["edges"]), "graph edges, targets clipped to speed",
          float(np.hypot(*steps[0]["targets"].T).max().round(3)))
