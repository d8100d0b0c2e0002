"""Alpha-beta cost attribution and layout comparison.

Every event is charged ``alpha + bytes_on_wire / beta`` for the link class
it runs over, a collective paying the single worst class its group spans.
The resulting figures are the communication share of TTFT, TPOT, and
end-to-end latency only: compute, queueing, and batching are out of scope,
so treat them as directional, never as wall-clock milliseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels
from .arch import ModelArch, ParallelismLayout, SequenceSpec
from .analytic import VolumeBreakdown, CollectiveKind
from .schedule import CommEvent, EventLog, simulate


class LinkClass(str, Enum):
    INTRA = "intra"
    INTER = "inter"


class LayoutError(ValueError):
    """Layout placement is inconsistent with the hardware description."""


class NoFeasibleLayoutError(LookupError):
    """No parallelism split satisfies the stated constraints."""


@dataclass(frozen=True)
class HardwareProfile:
    """Alpha-beta link parameters for intra-node and inter-node transfers.

    A profile is hierarchical when the inter-node link is strictly worse:
    lower bandwidth and at least the intra-node launch latency.
    """

    intra_alpha: float
    intra_beta: float
    inter_alpha: float
    inter_beta: float
    gpus_per_node: int

    def __post_init__(self) -> None:
        for attr in ("intra_alpha", "intra_beta", "inter_alpha", "inter_beta"):
            value = getattr(self, attr)
            if not value > 0:
                raise ValueError(f"{attr} must be strictly positive, got {value!r}")
        if not isinstance(self.gpus_per_node, int) or self.gpus_per_node < 1:
            raise ValueError(f"gpus_per_node must be a positive integer, got {self.gpus_per_node!r}")

    @property
    def is_hierarchical(self) -> bool:
        return self.inter_beta < self.intra_beta and self.inter_alpha >= self.intra_alpha

    def alpha(self, link: LinkClass) -> float:
        return self.inter_alpha if link is LinkClass.INTER else self.intra_alpha

    def beta(self, link: LinkClass) -> float:
        return self.inter_beta if link is LinkClass.INTER else self.intra_beta

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "HardwareProfile":
        known = {"intra_alpha", "intra_beta", "inter_alpha", "inter_beta", "gpus_per_node"}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown hardware profile keys: {', '.join(unknown)}")
        return cls(**payload)


def load_profile(path: str | Path) -> HardwareProfile:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise ValueError(f"hardware profile {path} must contain a JSON object")
    return HardwareProfile.from_dict(payload)


# Illustrative defaults: a uniform fabric and a node-locality-sensitive one
# with a tenth of the bandwidth between nodes.
FLAT_PROFILE = HardwareProfile(
    intra_alpha=5e-6, intra_beta=200e9, inter_alpha=5e-6, inter_beta=200e9, gpus_per_node=4
)
HIERARCHICAL_PROFILE = HardwareProfile(
    intra_alpha=5e-6, intra_beta=200e9, inter_alpha=2e-5, inter_beta=20e9, gpus_per_node=4
)

BUILTIN_PROFILES = {"flat": FLAT_PROFILE, "hierarchical": HIERARCHICAL_PROFILE}


def _validate_placement(layout: ParallelismLayout, hw: HardwareProfile) -> None:
    counts = np.bincount(np.asarray(layout.placement))
    if counts.max() > hw.gpus_per_node:
        raise LayoutError(
            f"placement puts {int(counts.max())} ranks on one node, "
            f"but gpus_per_node={hw.gpus_per_node}"
        )


def _stage_span_masks(layout: ParallelismLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-stage and per-boundary flags for groups spanning more than one node."""
    nodes = np.asarray(layout.placement, dtype=np.int64).reshape(layout.pp, layout.tp)
    stage_spans = nodes.max(axis=1) != nodes.min(axis=1)
    if layout.pp > 1:
        pair = np.concatenate([nodes[:-1], nodes[1:]], axis=1)
        boundary_spans = pair.max(axis=1) != pair.min(axis=1)
    else:
        boundary_spans = np.zeros(0, dtype=bool)
    return stage_spans, boundary_spans


def _event_group_spans_nodes(kind: CollectiveKind, stage: int, layout: ParallelismLayout) -> bool:
    stage_spans, boundary_spans = _stage_span_masks(layout)
    if kind in (CollectiveKind.SEND, CollectiveKind.RECV, CollectiveKind.ALLGATHER):
        return bool(boundary_spans[stage])
    if kind is CollectiveKind.GATHER:
        # The gather group is the last stage's TP group, wherever the event
        # is attributed.
        return bool(stage_spans[layout.pp - 1])
    return bool(stage_spans[stage])


def classify_link(event: CommEvent, layout: ParallelismLayout, hw: HardwareProfile) -> LinkClass:
    """Worst link class spanned by the ranks participating in ``event``."""
    _validate_placement(layout, hw)
    spans = _event_group_spans_nodes(event.kind, event.stage, layout)
    return LinkClass.INTER if spans else LinkClass.INTRA


def event_cost(event: CommEvent, link: LinkClass, hw: HardwareProfile) -> float:
    """Alpha-beta cost of one event: launch latency plus transfer time."""
    return hw.alpha(link) + event.bytes_on_wire / hw.beta(link)


@dataclass(frozen=True)
class SloEstimate:
    """Communication components of the serving latency targets, in seconds."""

    ttft_comm: float
    tpot_comm: float
    e2e_comm: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _event_costs(log: EventLog, layout: ParallelismLayout, hw: HardwareProfile) -> np.ndarray:
    _validate_placement(layout, hw)
    n = len(log)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    stage_spans, boundary_spans = _stage_span_masks(layout)
    codes = log.kind_codes
    stages = log.stages
    inter = np.zeros(n, dtype=bool)
    ar = codes == _kernels.KIND_ALLREDUCE
    inter[ar] = stage_spans[stages[ar]]
    boundary = (
        (codes == _kernels.KIND_SEND)
        | (codes == _kernels.KIND_RECV)
        | (codes == _kernels.KIND_ALLGATHER)
    )
    if boundary.any():
        inter[boundary] = boundary_spans[stages[boundary]]
    gather = codes == _kernels.KIND_GATHER
    inter[gather] = stage_spans[layout.pp - 1]

    alpha = np.where(inter, hw.inter_alpha, hw.intra_alpha)
    beta = np.where(inter, hw.inter_beta, hw.intra_beta)
    costs = alpha + log.bytes_on_wire / beta
    # A transfer's time is carried by its Send; the mirrored Recv is free.
    costs[codes == _kernels.KIND_RECV] = 0.0
    return costs


def total_comm_cost(log: EventLog, layout: ParallelismLayout, hw: HardwareProfile) -> float:
    """Serialized cost of every event in the log."""
    return float(_event_costs(log, layout, hw).sum())


def estimate_slo(log: EventLog, layout: ParallelismLayout, hw: HardwareProfile) -> SloEstimate:
    """Communication share of TTFT, TPOT, and end-to-end latency.

    TTFT is the serialized prefill pass, TPOT the mean decode pass, and the
    end-to-end figure their combination over ``decode_len - 1`` decode passes.
    """
    costs = _event_costs(log, layout, hw)
    n_passes = log.num_passes
    if costs.size == 0:
        return SloEstimate(0.0, 0.0, 0.0)
    per_pass = _kernels.accumulate_pass_costs(log.steps, costs, n_passes)
    ttft = float(per_pass[0])
    tpot = float(per_pass[1:].mean()) if n_passes > 1 else 0.0
    return SloEstimate(ttft, tpot, ttft + (n_passes - 1) * tpot)


@dataclass(frozen=True)
class SweepRow:
    """One sweep output row: a volume component at one configuration."""

    model: str
    tp: int
    pp: int
    prefill_len: int
    decode_len: int
    kind: str
    bytes: int
    ttft_comm: float | None
    tpot_comm: float | None


_SWEEP_KINDS = ("allreduce", "allgather", "gather", "p2p", "total")


def _volume_component(volume: VolumeBreakdown, kind: str) -> int:
    return {
        "allreduce": volume.allreduce_bytes,
        "allgather": volume.allgather_bytes,
        "gather": volume.gather_bytes,
        "p2p": volume.p2p_bytes,
        "total": volume.total_bytes,
    }[kind]


def sweep_decode_len(
    arch: ModelArch,
    layouts: list[ParallelismLayout],
    prefill_len: int,
    decode_lens: list[int],
    hw: HardwareProfile | None = None,
) -> list[SweepRow]:
    """Volumes (and SLO components when ``hw`` is given) across decode lengths."""
    rows: list[SweepRow] = []
    for layout in layouts:
        for decode_len in decode_lens:
            seq = SequenceSpec(prefill_len=prefill_len, decode_len=decode_len)
            log = simulate(arch, layout, seq)
            volume = log.wire_volume()
            if hw is None:
                ttft = tpot = None
            else:
                slo = estimate_slo(log, layout, hw)
                ttft, tpot = slo.ttft_comm, slo.tpot_comm
            for kind in _SWEEP_KINDS:
                rows.append(
                    SweepRow(
                        model=arch.name,
                        tp=layout.tp,
                        pp=layout.pp,
                        prefill_len=prefill_len,
                        decode_len=decode_len,
                        kind=kind,
                        bytes=_volume_component(volume, kind),
                        ttft_comm=ttft,
                        tpot_comm=tpot,
                    )
                )
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = ["model,tp,pp,S_p,S_d,kind,bytes,ttft_comm,tpot_comm"]
    for row in rows:
        ttft = "" if row.ttft_comm is None else repr(row.ttft_comm)
        tpot = "" if row.tpot_comm is None else repr(row.tpot_comm)
        lines.append(
            f"{row.model},{row.tp},{row.pp},{row.prefill_len},{row.decode_len},"
            f"{row.kind},{row.bytes},{ttft},{tpot}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AdviceWeights:
    """Objective weights for layout ranking; at least one must be positive.

    The first three weigh the communication SLO components (seconds); the
    ``volume`` weight scores raw wire bytes, useful for bandwidth-dominated
    planning that ignores launch latencies.
    """

    ttft: float = 0.0
    tpot: float = 0.0
    e2e: float = 0.0
    volume: float = 0.0

    def __post_init__(self) -> None:
        values = (self.ttft, self.tpot, self.e2e, self.volume)
        if any(v < 0 for v in values):
            raise ValueError("weights must be non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class LayoutAdvice:
    layout: ParallelismLayout
    score: float
    slo: SloEstimate
    total_bytes: int


def advise(
    arch: ModelArch,
    hw: HardwareProfile,
    seq: SequenceSpec,
    weights: AdviceWeights,
    num_gpus: int,
) -> list[LayoutAdvice]:
    """Rank every feasible (tp, pp) split of ``num_gpus`` workers.

    Candidates are the divisor pairs of the GPU count, packed onto nodes in
    rank order; splits with more stages than layers or a tensor degree that
    cannot slice the hidden width are dropped. Sorted by score, ties broken
    by lower total volume, then lower tensor degree.
    """
    if not isinstance(num_gpus, int) or num_gpus < 1:
        raise ValueError(f"num_gpus must be a positive integer, got {num_gpus!r}")
    candidates = []
    for tp in range(1, num_gpus + 1):
        if num_gpus % tp:
            continue
        pp = num_gpus // tp
        if pp > arch.num_layers:
            continue
        if pp > 1 and arch.hidden_size % tp:
            continue
        candidates.append(ParallelismLayout.packed(tp, pp, hw.gpus_per_node))
    if not candidates:
        raise NoFeasibleLayoutError(
            f"no (tp, pp) split of {num_gpus} workers fits {arch.name}"
        )
    ranked = []
    for layout in candidates:
        log = simulate(arch, layout, seq)
        slo = estimate_slo(log, layout, hw)
        volume = log.wire_volume()
        score = (
            weights.ttft * slo.ttft_comm
            + weights.tpot * slo.tpot_comm
            + weights.e2e * slo.e2e_comm
            + weights.volume * volume.total_bytes
        )
        ranked.append(LayoutAdvice(layout, score, slo, volume.total_bytes))
    ranked.sort(key=lambda a: (a.score, a.total_bytes, a.layout.tp))
    return ranked
