"""Multi-robot coverage control with primal-dual multi-objective weighting.

Subpackages: ``world`` (fields, dynamics, sensing), ``voronoi`` (partition
and cost geometry), ``comms`` (communication graph), ``controllers`` (CVT
policies), ``duality`` (primal-dual loop), ``lpac`` (neural policy
inference), ``cli`` (experiment runner).
"""

from .comms import CommGraph, build_graph, shift_operator
from .controllers import (CentralizedCVT, ClairvoyantCVT, DecentralizedCVT,
                          Policy, clairvoyant_cvt)
from .duality import (DualState, RunResult, dual_update, project_simplex,
                      run_primal_dual, slack_constrained, slack_fair)
from .lpac import LpacPolicy, WeightBundle
from .voronoi import (Partition, coverage_cost, coverage_cost_partition,
                      field_inertia, partition, weighted_centroids)
from .world import (GridField, RobotState, World, WorldConfig, clip_speed,
                    combined_field, generate_idf, initial_positions, sense,
                    step_dynamics)

__version__ = "0.1.0"
