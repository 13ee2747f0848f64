"""Deterministic desk-scale simulator for differentially private,
communication-compressed push-sum SGD over directed graphs."""
from __future__ import annotations

from .compression import (
    CompressedMessage,
    CompressorSpec,
    compress,
    empirical_contraction,
    omega_sq,
    payload_bits,
)
from .engine import (
    EngineConfig,
    RunRecord,
    RunResult,
    baseline_exact_sgp,
    check_omega_admissible,
    error_feedback_diagnostic,
    run,
)
from .harness import (
    ExperimentGrid,
    Schedule,
    run_grid,
    theoretical_schedule,
    utility_probe,
)
from .matrix_oracle import matrix_oracle
from .privacy import (
    PrivacySpec,
    check_budget_admissible,
    clip_gradient,
    draw_noise,
    sigma_sq,
)
from .problems import (
    LocalDataset,
    Problem,
    load_csv,
    make_problem,
    partition,
    sample_index,
)
from .topology import (
    DirectedGraph,
    MixingMatrix,
    SpectralConstants,
    build_graph,
    build_mixing,
    estimate_constants,
    graph_from_edges,
    is_strongly_connected,
    load_edge_list,
)

__version__ = "0.1.0"
