"""Federated rejection-signal task scheduling over streaming telemetry.

Each simulated compute node tracks the principal subspace of its own feature
stream with block-wise rank-adaptive PCA, watches the per-component
projections for spikes, and raises a per-timestep rejection signal that
anticipates cpu_ready saturation.  A tree of aggregators merges node
subspaces into a global estimate of the cluster workload.
"""

from .baselines import (
    FrequentDirectionsTracker,
    PowerMethodTracker,
    ProntoTracker,
    SpiritTracker,
    TrackerKind,
    make_tracker,
    synthetic_sigma,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    classify_sides,
    contained_pct,
    downtime,
    emit_cdf,
    evaluate_node,
    success_rate,
)
from .federation import FederationTree, GlobalEstimate, aggregate, pull_global
from .linalg import (
    EnergyBounds,
    Subspace,
    energy,
    merge_basic,
    merge_fast,
    principal_angles,
    qr,
    rank_adjust,
    ssvd,
    svd_truncated,
)
from .node import ComputeNode, PropagationEvent, basis_absdiff
from .spikes import RejectionDecision, SpikeDetector, reject_job
from .streaming_pca import BlockBuffer, FpcaConfig, fpca_update, project, residual_ratio
from .traces import (
    SpikeLabeler,
    SyntheticConfig,
    TraceRecord,
    accuracy,
    generate_synthetic,
    label_spikes,
    parse_trace,
)

__version__ = "0.1.0"
