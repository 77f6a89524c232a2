"""SDN controller placement in satellite-terrestrial networks.

Jointly minimizes controller-to-gateway latency and control-path error rate,
exactly (branch and bound) or with a randomized double greedy.
"""

from .errors import InputError
from .objective import Instance, Placement, eval_w, eval_wc, eval_wr, optimal_assignment, upper_bound, w_tilde
from .reliability import (
    ErrorMatrix,
    PathMode,
    PathRecord,
    best_control_path,
    gateway_distance,
    path_error_rate,
    reliability_matrix,
    shortest_latency_path,
    yen_k_paths,
)
from .solvers import SolveResult, check_supermodularity, solve_double_greedy, solve_exact
from .topology import CASES, FailureAssignment, FailureCase, Topology, edge_length, load_graphml, read_topology, sample_failures

__version__ = "0.1.0"
