import numpy as np
import pytest

from coverduals.world import World, WorldConfig


def tiny_config(**overrides) -> WorldConfig:
    """Small, fast world used across tests."""
    kwargs = dict(env_size=64.0, resolution=1.0, num_robots=4, num_idfs=2,
                  comm_radius=32.0, sensor_size=16, num_steps=50,
                  dual_period=10, seed=7)
    kwargs.update(overrides)
    cfg = WorldConfig(**kwargs)
    cfg.validate()
    return cfg


@pytest.fixture
def tiny_world() -> World:
    return World.from_config(tiny_config())


def random_field_values(rng: np.random.Generator, n: int) -> np.ndarray:
    """Arbitrary nonnegative unit-mass density for oracle-style tests."""
    values = rng.random((n, n)) ** 2
    return values / values.sum()
