"""Averaging dynamics with private signals: simulation, outcome classification,
fundamental-matrix steady states and random-walk checks."""

__version__ = "0.1.0"

from .augmentation import AugmentedSystem, augment, deaugment, step_augmented
from .dynamics import (
    ConvergenceCfg,
    OutcomeReport,
    UpdateSchedule,
    check_theorem2_conditions,
    classify_outcome,
    heterogeneity,
    product_diagnostics,
    run,
    step_affine,
)
from .graph_core import (
    StochasticMatrix,
    TopologyReport,
    block_permutation,
    check_regularity,
    estimate_infinite_graph,
    gamma_coefficient,
    scc_decompose,
)
from .steady_state import (
    absorption_probabilities,
    absorption_report,
    contact_trace,
    fundamental_matrix,
    quasi_connected_steady_state,
    simulate_walks,
    steady_state,
)

__all__ = [
    "AugmentedSystem",
    "ConvergenceCfg",
    "OutcomeReport",
    "StochasticMatrix",
    "TopologyReport",
    "UpdateSchedule",
    "absorption_probabilities",
    "absorption_report",
    "augment",
    "block_permutation",
    "check_regularity",
    "check_theorem2_conditions",
    "classify_outcome",
    "contact_trace",
    "deaugment",
    "estimate_infinite_graph",
    "fundamental_matrix",
    "gamma_coefficient",
    "heterogeneity",
    "product_diagnostics",
    "quasi_connected_steady_state",
    "run",
    "scc_decompose",
    "simulate_walks",
    "steady_state",
    "step_affine",
    "step_augmented",
]
