"""
Voronoi partitions and the coverage cost
========================================

Every grid cell is charged to its nearest robot.  The coverage cost sums
squared distance times density over all cells, and the "nearest robot"
form equals the "sum over each robot's own region" form exactly, because
both read the same assignment.
"""

import numpy as np

from coverduals import WorldConfig, generate_idf, voronoi

config = WorldConfig(env_size=128, resolution=1.0, num_robots=5, num_idfs=1,
                     comm_radius=64, sensor_size=32)
config.validate()

rng = np.random.default_rng(3)
field = generate_idf(rng, config)
positions = rng.random((5, 2)) * config.env_size

part = voronoi.partition(positions, config.grid_cells, config.resolution)
sizes = np.bincount(part.assignment.ravel(), minlength=5)
print("cells per robot:", sizes.tolist())

cost_min_form = voronoi.coverage_cost(positions, field)
cost_region_form = voronoi.coverage_cost_partition(positions, field, part)
print(f"min-form cost:    {cost_min_form!r}")
print(f"region-form cost: {cost_region_form!r}")
print("identical:", cost_min_form == cost_region_form)

# the cost function f is pluggable; the default is f(x) = x^2
linear = voronoi.coverage_cost(positions, field, f=lambda d: d)
print(f"with f(x) = x (mean weighted distance): {linear:.4f}")

mass, centroids = voronoi.weighted_centroids(part, field, positions)
print("region density mass per robot:", np.round(mass, 4).tolist())
print("distance from robot to its weighted centroid:",
      np.round(np.linalg.norm(centroids - positions, axis=1), 2).tolist())
