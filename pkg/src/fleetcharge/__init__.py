"""Charge-scheduling optimizer and discrete-event simulator for EV fleets."""

from .fade import (
    Branch,
    BranchCoefficients,
    FadeModelParams,
    SlotCharge,
    StressFactors,
    calendric_fade_approx,
    cyclic_fade_approx,
    cyclic_fade_exact,
    fade_fit_report,
    select_branch,
    stress_factors,
    total_fade_approx,
)
from .problem import (
    ChargingTask,
    NormalizationPoints,
    ObjectiveBreakdown,
    PriceSeries,
    ProblemInstance,
    SlotGrid,
    availability_weights,
    build_constraints,
    build_instance,
    charging_period,
    compute_normalization_points,
    normalized_objective,
    objective_components,
)
from .scheduler import (
    FleetState,
    Policy,
    StationLimits,
    VehicleState,
    admit_task,
    apply_slot,
    baseline_schedule,
    proposed_schedule,
)
from .simulator import (
    Event,
    MetricsReport,
    RunResult,
    SimConfig,
    charging_time,
    peak_power_period,
    run,
    value_loss,
)
from .solver import (
    SolveReport,
    SolverConfig,
    feasibility_check,
    oracle_grid_search,
    single_objective_minimizer,
    solve,
)

__version__ = "0.1.0"
