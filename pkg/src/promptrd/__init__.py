"""Optimal distortion-rate frontiers for token-level prompt compression."""

from promptrd.constants import (
    ConstantsTable,
    EnumerationMode,
    TableMode,
    compute_constants,
    conditional_tables,
    enumerate_compressed,
    read_constants,
    write_constants,
)
from promptrd.core import (
    AnswerDistribution,
    Infeasible,
    Metric,
    PromptRDError,
    TokenSequence,
    argmax_answer,
    distortion,
)
from promptrd.dataset import MarkovChainParams, answer, generate_dataset, sequence_log_prob
from promptrd.frontier import (
    Frontier,
    breakpoints_for,
    dual_value,
    frontier_curve,
    lower_left_envelope,
    merge_breakpoints,
)
from promptrd.lp_oracle import solve_primal

__version__ = "0.1.0"

__all__ = [
    "AnswerDistribution", "ConstantsTable", "EnumerationMode", "Frontier", "Infeasible",
    "MarkovChainParams", "Metric", "PromptRDError", "TableMode", "TokenSequence", "answer",
    "argmax_answer", "breakpoints_for", "compute_constants", "conditional_tables", "distortion",
    "dual_value", "enumerate_compressed", "frontier_curve", "generate_dataset",
    "lower_left_envelope", "merge_breakpoints", "read_constants", "sequence_log_prob",
    "solve_primal", "write_constants",
]
