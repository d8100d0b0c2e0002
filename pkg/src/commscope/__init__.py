"""Communication-pattern modeling for distributed LLM inference.

Predicts per-collective wire volumes for tensor-, pipeline-, and hybrid-
parallel serving, enumerates the event schedule a request produces, diffs
predictions against profiler observations, and attributes alpha-beta costs
to estimate the communication share of serving latency targets.
"""

from .arch import (
    ModelArch,
    ParallelismLayout,
    SequenceSpec,
    UnknownPresetError,
    known_presets,
    layers_per_stage,
    load_model,
    preset,
)
from .analytic import (
    CollectiveKind,
    DegenerateLayoutError,
    VolumeBreakdown,
    correction_factor,
    growth_factor,
    hybrid_volume,
    pp_volume,
    tp_volume,
)
from .schedule import (
    CommEvent,
    EventLog,
    Phase,
    PointToPointCounts,
    ScheduleSummary,
    SummaryRow,
    p2p_op_counts,
    simulate,
    summarize,
)
from .latency import (
    AdviceWeights,
    BUILTIN_PROFILES,
    FLAT_PROFILE,
    HIERARCHICAL_PROFILE,
    HardwareProfile,
    LayoutAdvice,
    LayoutError,
    LinkClass,
    NoFeasibleLayoutError,
    SloEstimate,
    SweepRow,
    advise,
    classify_link,
    estimate_slo,
    event_cost,
    load_profile,
    sweep_decode_len,
    sweep_to_csv,
    total_comm_cost,
)
from .trace import (
    DiffEntry,
    DiffReport,
    ObservationParseError,
    ObservationRecord,
    diff,
    observations_from_summary,
    parse_observations,
)

__version__ = "0.1.0"

__all__ = [
    "AdviceWeights",
    "BUILTIN_PROFILES",
    "CollectiveKind",
    "CommEvent",
    "DegenerateLayoutError",
    "DiffEntry",
    "DiffReport",
    "EventLog",
    "FLAT_PROFILE",
    "HIERARCHICAL_PROFILE",
    "HardwareProfile",
    "LayoutAdvice",
    "LayoutError",
    "LinkClass",
    "ModelArch",
    "NoFeasibleLayoutError",
    "ObservationParseError",
    "ObservationRecord",
    "ParallelismLayout",
    "Phase",
    "PointToPointCounts",
    "ScheduleSummary",
    "SequenceSpec",
    "SloEstimate",
    "SummaryRow",
    "SweepRow",
    "UnknownPresetError",
    "VolumeBreakdown",
    "advise",
    "classify_link",
    "correction_factor",
    "diff",
    "estimate_slo",
    "event_cost",
    "growth_factor",
    "hybrid_volume",
    "known_presets",
    "layers_per_stage",
    "load_model",
    "load_profile",
    "observations_from_summary",
    "p2p_op_counts",
    "parse_observations",
    "pp_volume",
    "preset",
    "simulate",
    "summarize",
    "sweep_decode_len",
    "sweep_to_csv",
    "total_comm_cost",
    "tp_volume",
]
