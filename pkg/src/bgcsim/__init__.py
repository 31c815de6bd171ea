"""Deterministic simulator and bounds toolkit for Byzantine-resilient gradient coding."""

from .adversary import (
    CallbackAdversary,
    ClaimedGradientTable,
    DisagreementSet,
    FlipFlopAdversary,
    NoAdversary,
    SymmetrizationAdversary,
    TableAdversary,
    World,
    honest_table,
    symmetrization_attack,
    two_case_worlds,
)
from .bounds import (
    BoundsReport,
    Witness,
    comm_lower,
    disagreement_coverage_check,
    draco_baseline,
    indistinguishability_check,
    local_comp_lower,
    ratio_limit,
    scheme_upper_bounds,
)
from .core import (
    SchemeParams,
    build_fractional_repetition,
    full_gradient,
    random_gradients,
    replication_factor,
)
from .matchtree import MatchTree, NodeRange, children, infer_right_label, root_range
from .protocol import Metrics, ProtocolRun, Transcript, run_scheme

__all__ = [
    "BoundsReport",
    "CallbackAdversary",
    "ClaimedGradientTable",
    "DisagreementSet",
    "FlipFlopAdversary",
    "MatchTree",
    "Metrics",
    "NoAdversary",
    "NodeRange",
    "ProtocolRun",
    "SchemeParams",
    "SymmetrizationAdversary",
    "TableAdversary",
    "Transcript",
    "Witness",
    "World",
    "build_fractional_repetition",
    "children",
    "comm_lower",
    "disagreement_coverage_check",
    "draco_baseline",
    "full_gradient",
    "honest_table",
    "indistinguishability_check",
    "infer_right_label",
    "local_comp_lower",
    "random_gradients",
    "ratio_limit",
    "replication_factor",
    "root_range",
    "run_scheme",
    "scheme_upper_bounds",
    "symmetrization_attack",
    "two_case_worlds",
]
