"""Equilibrium pricing for multimodal mobility markets.

Computes the joint equilibrium of traveler mode choice (drive /
ride-sourcing / ride-sourcing + transit), ride-sourcing driver relocation
and sign-out, and the locational prices that clear every zone's supply and
demand, then cross-checks each solution against the raw logit models, a
finite-difference KKT audit, and a grid-search dual oracle.
"""

__version__ = "0.1.0"

from .netgraph import Network, TimeMatrix, parse_tntp, serialize_tntp, shortest_time, time_matrix
from .scenario import (
    DriverParams,
    ODSpec,
    Scenario,
    TravelerParams,
    builtin_5node,
    builtin_sioux,
    load,
    save,
    validate,
    with_param,
)
from .choice import (
    DriverFlows,
    PriceSystem,
    TravelerFlows,
    driver_flows_dual,
    driver_flows_logit,
    driver_utilities,
    traveler_flows,
    traveler_utilities,
)
from .equilibrium import (
    EquilibriumSolution,
    NotConverged,
    ResidualReport,
    extract_prices,
    objective_value,
    residual,
    solve,
    uniqueness_probe,
)
from .oracle import grid_solve_micro, kkt_check, micro_instances, perturbation_probe, random_scenario
from .analytics import hub_study, metrics, sweep

__all__ = [
    "Network", "TimeMatrix", "parse_tntp", "serialize_tntp", "shortest_time",
    "time_matrix", "DriverParams", "ODSpec", "Scenario", "TravelerParams",
    "builtin_5node", "builtin_sioux", "load", "save", "validate", "with_param",
    "DriverFlows", "PriceSystem", "TravelerFlows", "driver_flows_dual",
    "driver_flows_logit", "driver_utilities", "traveler_flows",
    "traveler_utilities", "EquilibriumSolution", "NotConverged",
    "ResidualReport", "extract_prices", "objective_value", "residual",
    "solve", "uniqueness_probe", "grid_solve_micro", "kkt_check",
    "micro_instances", "perturbation_probe", "random_scenario", "hub_study",
    "metrics", "sweep",
]
