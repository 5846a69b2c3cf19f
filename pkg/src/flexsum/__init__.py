"""flexsum: aggregate storage-fleet flexibility by summed extreme actions.

Quantifies what a fleet of storage devices (EVs, batteries) can jointly do
on the grid side: per-device feasible sets are polytopes, their Minkowski
sum is approximated from inside by summing per-device extreme actions over
shared sign vectors, and any dispatch over the summed columns disaggregates
exactly back to feasible per-device schedules.
"""

from .aggregation import (
    DirectionSet,
    NotRepresentable,
    VertexFlexibility,
    aggregate,
    disaggregate,
    find_weights,
    load_flexibility,
    sample_directions,
    save_flexibility,
)
from .dispatch import (
    DispatchResult,
    Scenario,
    peak_shave_centralized,
    peak_shave_vertex,
    uncontrolled_baseline,
)
from .extreme import (
    Infeasible,
    corrective_decrease,
    corrective_increase,
    extreme_action,
    extreme_actions,
)
from .lp import LinearProgram, LpSolution, LpStatus, solve
from .oracles import (
    QualityMetrics,
    approximation_quality,
    minkowski_contains,
    support_function,
    vertex_rank_check,
)
from .scenario import (
    EvTemplate,
    GenerationFailed,
    ScenarioSpec,
    generate_scenario,
    load_scenario,
    run_pipeline,
    save_scenario,
)
from .storage import (
    EvSpec,
    FeasibilityReport,
    Polytope,
    StorageDevice,
    build_ev_device,
    build_polytope,
    check_feasible,
    simulate_soc,
)

__version__ = "0.1.0"

__all__ = [
    "DirectionSet",
    "DispatchResult",
    "EvSpec",
    "EvTemplate",
    "FeasibilityReport",
    "GenerationFailed",
    "Infeasible",
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "NotRepresentable",
    "Polytope",
    "QualityMetrics",
    "Scenario",
    "ScenarioSpec",
    "StorageDevice",
    "VertexFlexibility",
    "aggregate",
    "approximation_quality",
    "build_ev_device",
    "build_polytope",
    "check_feasible",
    "corrective_decrease",
    "corrective_increase",
    "disaggregate",
    "extreme_action",
    "extreme_actions",
    "find_weights",
    "generate_scenario",
    "load_flexibility",
    "load_scenario",
    "minkowski_contains",
    "peak_shave_centralized",
    "peak_shave_vertex",
    "run_pipeline",
    "sample_directions",
    "save_flexibility",
    "save_scenario",
    "simulate_soc",
    "solve",
    "support_function",
    "uncontrolled_baseline",
    "vertex_rank_check",
]
