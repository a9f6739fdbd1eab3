"""stabsim: a deterministic simulator for self-stabilizing LCL algorithms."""

from .graph import (
    BOTTOM,
    Configuration,
    Graph,
    Multiset,
    build_graph,
    clone_graph,
    cycle_graph,
    distance,
    edge_id,
    grid_graph,
    line_graph,
    parse_edge_list,
    path_graph,
    random_bounded_graph,
)
from .lcl import (
    LclSpec,
    PotentialSpec,
    builtin_potential,
    build_supportive_digraph,
    check_core_coverage,
    compute_cores,
    influence_number,
    is_content,
    is_legal,
    is_strong,
    potential,
)
from .pps import HOLD, PpsState, get_step, mixing_profile, step_counter, tau_for
from .engine import (
    AdversaryAction,
    Network,
    Timeout,
    apply_adversary,
    corrupt_everything,
    random_fault_schedule,
    run_round,
    run_until_stable,
)
from .transform import (
    IngredientSet,
    eligibility_probe,
    transform_edge_lcl,
    transform_node_lcl,
)
from .registry import PROBLEM_NAMES, make_algorithm, make_ingredients, problem_lcl

__version__ = "0.1.0"
