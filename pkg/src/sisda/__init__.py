"""Selective inference for sequential feature selection after
optimal-transport domain adaptation."""

from .inference import (
    InferenceConfig,
    ScanEngine,
    SelectiveResult,
    StackedResponse,
    TestDirection,
    assemble_region,
    build_direction,
    infer_feature,
    p_bonferroni,
    p_data_splitting,
    p_naive,
    p_over_conditioning,
    run_si_seqfs_da,
    truncated_p,
)
from .selection import (
    SelectionTrace,
    backward_select,
    criterion_score,
    forward_select,
    select_with_criterion,
)
from .transport import DomainData, TransportSolution, cost_vector, solve_transport
from .experiments import SimConfig, SimReport, generate_synthetic, ingest_csv

__all__ = [
    "DomainData",
    "InferenceConfig",
    "ScanEngine",
    "SelectionTrace",
    "SelectiveResult",
    "SimConfig",
    "SimReport",
    "StackedResponse",
    "TestDirection",
    "TransportSolution",
    "assemble_region",
    "backward_select",
    "build_direction",
    "cost_vector",
    "criterion_score",
    "forward_select",
    "generate_synthetic",
    "infer_feature",
    "ingest_csv",
    "p_bonferroni",
    "p_data_splitting",
    "p_naive",
    "p_over_conditioning",
    "run_si_seqfs_da",
    "select_with_criterion",
    "solve_transport",
    "truncated_p",
]
