"""Event-level simulation of the communication schedule of one request.

A run is one prefill pass over the whole prompt followed by one pass per
additional generated token. Within a pass the stages execute in pipeline
order: the first stage opens with its embedding Allreduce, every layer
contributes two Allreduces over the full hidden width, each stage boundary
forwards two hidden-slice Send/Recv pairs and then rebuilds the width with
two Allgathers, and the pass closes with one vocabulary-shard Gather.

Events record what a participating worker observes, so each group operation
appears once with its per-rank wire bytes. Boundary traffic is attributed to
the upstream stage, and the closing Gather to stage 0, whose first rank
drives sampling; the per-stage views therefore put the full operation mix on
stage 0 and only layer Allreduces on later stages.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from enum import Enum
from math import prod
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .arch import ModelArch, ParallelismLayout, SequenceSpec, layers_per_stage
from .analytic import CollectiveKind, VolumeBreakdown


class Phase(str, Enum):
    PREFILL = "Prefill"
    DECODE = "Decode"


_KIND_BY_CODE = {
    _kernels.KIND_ALLREDUCE: CollectiveKind.ALLREDUCE,
    _kernels.KIND_ALLGATHER: CollectiveKind.ALLGATHER,
    _kernels.KIND_GATHER: CollectiveKind.GATHER,
    _kernels.KIND_SEND: CollectiveKind.SEND,
    _kernels.KIND_RECV: CollectiveKind.RECV,
}
_CODE_BY_KIND = {kind: code for code, kind in _KIND_BY_CODE.items()}
_PHASE_BY_CODE = {_kernels.PHASE_PREFILL: Phase.PREFILL, _kernels.PHASE_DECODE: Phase.DECODE}

# Presentation order used by summaries and reports.
KIND_ORDER = (
    CollectiveKind.ALLREDUCE,
    CollectiveKind.GATHER,
    CollectiveKind.ALLGATHER,
    CollectiveKind.SEND,
    CollectiveKind.RECV,
)


@dataclass(frozen=True)
class CommEvent:
    """One communication operation as seen by a participating worker."""

    kind: CollectiveKind
    phase: Phase
    step: int
    stage: int
    layer: int | None
    shape: tuple[int, ...]
    element_count: int
    bytes_on_wire: int
    group_size: int

    def __post_init__(self) -> None:
        if self.element_count != prod(self.shape):
            raise ValueError(
                f"element_count {self.element_count} does not match shape {self.shape}"
            )
        if self.bytes_on_wire < 0 or self.group_size < 1:
            raise ValueError("bytes_on_wire must be >= 0 and group_size >= 1")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "phase": self.phase.value,
            "step": self.step,
            "stage": self.stage,
            "layer": self.layer,
            "shape": list(self.shape),
            "element_count": self.element_count,
            "bytes_on_wire": self.bytes_on_wire,
            "group_size": self.group_size,
        }


class PointToPointCounts(NamedTuple):
    prefill: int
    decode: int


def p2p_op_counts(pp: int, seq: SequenceSpec) -> PointToPointCounts:
    """Per-direction point-to-point operation counts for a whole run.

    Every stage boundary carries two transfers per pass, so one direction
    sees ``2 * (pp - 1)`` operations in prefill and the same per decode pass.
    """
    if not isinstance(pp, int) or pp < 1:
        raise ValueError(f"pp must be a positive integer, got {pp!r}")
    per_pass = 2 * (pp - 1)
    return PointToPointCounts(per_pass, per_pass * (seq.decode_len - 1))


class EventLog:
    """Immutable, array-backed event log in execution order."""

    def __init__(
        self,
        columns: dict[str, np.ndarray],
        arch: ModelArch,
        layout: ParallelismLayout,
        seq: SequenceSpec,
    ) -> None:
        missing = set(_kernels.COLUMNS) - set(columns)
        if missing:
            raise ValueError(f"missing event columns: {sorted(missing)}")
        for array in columns.values():
            array.setflags(write=False)
        self._cols = columns
        self.arch = arch
        self.layout = layout
        self.seq = seq

    def __len__(self) -> int:
        return int(self._cols["kind"].shape[0])

    def column(self, name: str) -> np.ndarray:
        return self._cols[name]

    @property
    def kind_codes(self) -> np.ndarray:
        return self._cols["kind"]

    @property
    def phase_codes(self) -> np.ndarray:
        return self._cols["phase"]

    @property
    def steps(self) -> np.ndarray:
        return self._cols["step"]

    @property
    def stages(self) -> np.ndarray:
        return self._cols["stage"]

    @property
    def bytes_on_wire(self) -> np.ndarray:
        return self._cols["bytes_on_wire"]

    @property
    def group_sizes(self) -> np.ndarray:
        return self._cols["group_size"]

    @property
    def num_passes(self) -> int:
        return self.seq.num_passes

    def event(self, index: int) -> CommEvent:
        cols = self._cols
        dim0 = int(cols["dim0"][index])
        dim1 = int(cols["dim1"][index])
        shape = (dim0,) if dim1 < 0 else (dim0, dim1)
        layer = int(cols["layer"][index])
        return CommEvent(
            kind=_KIND_BY_CODE[int(cols["kind"][index])],
            phase=_PHASE_BY_CODE[int(cols["phase"][index])],
            step=int(cols["step"][index]),
            stage=int(cols["stage"][index]),
            layer=None if layer < 0 else layer,
            shape=shape,
            element_count=int(cols["element_count"][index]),
            bytes_on_wire=int(cols["bytes_on_wire"][index]),
            group_size=int(cols["group_size"][index]),
        )

    def __iter__(self) -> Iterator[CommEvent]:
        for index in range(len(self)):
            yield self.event(index)

    def filter(
        self,
        phase: Phase | None = None,
        step: int | None = None,
        stage: int | None = None,
        kind: CollectiveKind | None = None,
    ) -> "EventLog":
        mask = np.ones(len(self), dtype=bool)
        if phase is not None:
            code = _kernels.PHASE_PREFILL if phase is Phase.PREFILL else _kernels.PHASE_DECODE
            mask &= self._cols["phase"] == code
        if step is not None:
            mask &= self._cols["step"] == step
        if stage is not None:
            mask &= self._cols["stage"] == stage
        if kind is not None:
            mask &= self._cols["kind"] == _CODE_BY_KIND[kind]
        columns = {name: array[mask] for name, array in self._cols.items()}
        return EventLog(columns, self.arch, self.layout, self.seq)

    def wire_volume(self) -> VolumeBreakdown:
        """Per-kind wire bytes; each point-to-point transfer counted once.

        Recv rows mirror the Send of the same transfer, so only the Send side
        contributes to the point-to-point total.
        """
        kinds = self._cols["kind"]
        wire = self._cols["bytes_on_wire"]

        def total(code: int) -> int:
            return int(wire[kinds == code].sum())

        return VolumeBreakdown.of(
            allreduce=total(_kernels.KIND_ALLREDUCE),
            allgather=total(_kernels.KIND_ALLGATHER),
            gather=total(_kernels.KIND_GATHER),
            p2p=total(_kernels.KIND_SEND),
        )

    def to_jsonl(self, destination) -> None:
        """Write one JSON object per event, in execution order."""
        if isinstance(destination, (str, Path)):
            with open(destination, "w", encoding="utf-8") as handle:
                self.to_jsonl(handle)
            return
        for event in self:
            destination.write(json.dumps(event.to_json_dict(), sort_keys=True))
            destination.write("\n")


def _pass_slots(arch: ModelArch, layout: ParallelismLayout):
    """Per-pass slot template: static columns plus per-token wire units."""
    t, p = layout.tp, layout.pp
    h, b = arch.hidden_size, arch.bytes_per_element
    kinds: list[int] = []
    stages: list[int] = []
    layers: list[int] = []
    groups: list[int] = []
    dim1: list[int] = []
    wire_unit: list[int] = []

    def add(kind: int, stage: int, layer: int, group: int, d1: int, unit: int) -> None:
        kinds.append(kind)
        stages.append(stage)
        layers.append(layer)
        groups.append(group)
        dim1.append(d1)
        wire_unit.append(unit)

    ar_unit = 2 * h * b * (t - 1) // t if t > 1 else 0
    ag_unit = h * b * (t - 1) // t if t > 1 else 0
    slice_width = h // t
    send_unit = slice_width * b
    per_stage = layers_per_stage(arch.num_layers, p)
    for s in range(p):
        if s == 0 and t > 1:
            add(_kernels.KIND_ALLREDUCE, 0, -1, t, h, ar_unit)
        if t > 1:
            for layer in range(per_stage[s]):
                add(_kernels.KIND_ALLREDUCE, s, layer, t, h, ar_unit)
                add(_kernels.KIND_ALLREDUCE, s, layer, t, h, ar_unit)
        if s < p - 1:
            for _ in range(2):
                add(_kernels.KIND_SEND, s, -1, 2, slice_width, send_unit)
                add(_kernels.KIND_RECV, s, -1, 2, slice_width, send_unit)
            if t > 1:
                add(_kernels.KIND_ALLGATHER, s, -1, t, h, ag_unit)
                add(_kernels.KIND_ALLGATHER, s, -1, t, h, ag_unit)
    if t > 1:
        add(_kernels.KIND_GATHER, 0, -1, t, -1, arch.vocab_shard(t) * b)

    as_array = lambda values: np.asarray(values, dtype=np.int64)
    return tuple(as_array(v) for v in (kinds, stages, layers, groups, dim1, wire_unit))


def _validate(arch: ModelArch, layout: ParallelismLayout) -> None:
    t, p = layout.tp, layout.pp
    h, b = arch.hidden_size, arch.bytes_per_element
    if p > arch.num_layers:
        raise ValueError(f"pipeline degree {p} exceeds layer count {arch.num_layers}")
    if t > 1 and (2 * h * b * (t - 1)) % t:
        raise ValueError(
            f"allreduce wire bytes are not integral for hidden_size={h}, "
            f"bytes_per_element={b}, tp={t}"
        )
    if p > 1 and h % t:
        raise ValueError(f"tp={t} must divide hidden_size={h} to slice boundary transfers")


def simulate(arch: ModelArch, layout: ParallelismLayout, seq: SequenceSpec) -> EventLog:
    """Enumerate every communication event of one request, in order."""
    _validate(arch, layout)
    slots = _pass_slots(arch, layout)
    expanded = _kernels.expand_event_log(
        *slots,
        np.int64(arch.vocab_shard(layout.tp)),
        np.int64(seq.prefill_len),
        np.int64(seq.num_passes),
    )
    columns = dict(zip(_kernels.COLUMNS, expanded))
    return EventLog(columns, arch, layout, seq)


@dataclass(frozen=True)
class SummaryRow:
    """Aggregate of identically-shaped events of one kind within a phase."""

    phase: Phase
    kind: CollectiveKind
    count: int
    shape: tuple[int, ...]
    message_bytes: int
    total_message_bytes: int
    total_wire_bytes: int
    group_size: int


def _rows_for_mask(log: EventLog, mask: np.ndarray) -> tuple[SummaryRow, ...]:
    index = np.flatnonzero(mask)
    if index.size == 0:
        return ()
    cols = log._cols
    keys = np.stack(
        [cols[name][index] for name in ("phase", "kind", "dim0", "dim1", "group_size")],
        axis=1,
    )
    unique_keys = np.unique(keys, axis=0)
    bpe = log.arch.bytes_per_element
    rows = []
    for phase_code, kind_code, dim0, dim1, group in unique_keys:
        selected = index[np.all(keys == (phase_code, kind_code, dim0, dim1, group), axis=1)]
        count = int(selected.size)
        shape = (int(dim0),) if dim1 < 0 else (int(dim0), int(dim1))
        element_count = int(cols["element_count"][selected[0]])
        rows.append(
            SummaryRow(
                phase=_PHASE_BY_CODE[int(phase_code)],
                kind=_KIND_BY_CODE[int(kind_code)],
                count=count,
                shape=shape,
                message_bytes=element_count * bpe,
                total_message_bytes=count * element_count * bpe,
                total_wire_bytes=int(cols["bytes_on_wire"][selected].sum()),
                group_size=int(group),
            )
        )
    order = {kind: i for i, kind in enumerate(KIND_ORDER)}
    rows.sort(key=lambda r: (r.phase is Phase.DECODE, order[r.kind], r.shape))
    return tuple(rows)


@dataclass(frozen=True)
class ScheduleSummary:
    """Counts, shapes, and byte totals per (phase, kind), whole run and per stage."""

    rows: tuple[SummaryRow, ...]
    per_stage: dict[int, tuple[SummaryRow, ...]]
    tp: int
    pp: int
    bytes_per_element: int

    def stages(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_stage))

    def select_stage(self, stage: int) -> "ScheduleSummary":
        if stage not in self.per_stage:
            raise ValueError(f"stage {stage} not in {sorted(self.per_stage)}")
        return ScheduleSummary(
            rows=self.per_stage[stage],
            per_stage={stage: self.per_stage[stage]},
            tp=self.tp,
            pp=self.pp,
            bytes_per_element=self.bytes_per_element,
        )

    def for_rank(self, rank: int) -> "ScheduleSummary":
        """View for one global rank; every rank in a stage sees the same mix."""
        if not 0 <= rank < self.tp * self.pp:
            raise ValueError(f"rank {rank} out of range for {self.tp * self.pp} ranks")
        return self.select_stage(rank // self.tp)

    def volume(self) -> VolumeBreakdown:
        totals = {kind: 0 for kind in KIND_ORDER}
        for row in self.rows:
            totals[row.kind] += row.total_wire_bytes
        return VolumeBreakdown.of(
            allreduce=totals[CollectiveKind.ALLREDUCE],
            allgather=totals[CollectiveKind.ALLGATHER],
            gather=totals[CollectiveKind.GATHER],
            p2p=totals[CollectiveKind.SEND],
        )

    def to_observation_dicts(self) -> list[dict]:
        """Rows in the observation-record form used by :mod:`commscope.trace`."""
        return [
            {
                "phase": row.phase.value,
                "kind": row.kind.value,
                "count": row.count,
                "shape": list(row.shape),
                "bytes_per_element": self.bytes_per_element,
                "group_size": row.group_size,
            }
            for row in self.rows
        ]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("phase,kind,count,shape,message_bytes,total_message_bytes,total_wire_bytes,group_size\n")
        for row in self.rows:
            shape = "x".join(str(d) for d in row.shape)
            out.write(
                f"{row.phase.value},{row.kind.value},{row.count},{shape},"
                f"{row.message_bytes},{row.total_message_bytes},{row.total_wire_bytes},{row.group_size}\n"
            )
        return out.getvalue()

    def to_markdown(self) -> str:
        """Render kinds against phases the way the validation tables are laid out."""
        by_kind: dict[CollectiveKind, dict[Phase, SummaryRow]] = {}
        for row in self.rows:
            by_kind.setdefault(row.kind, {})[row.phase] = row
        lines = [
            "| Operation | Prefill count | Prefill shape | Decode count | Decode shape |",
            "| --- | --- | --- | --- | --- |",
        ]
        for kind in KIND_ORDER:
            if kind not in by_kind:
                continue
            cells = []
            for phase in (Phase.PREFILL, Phase.DECODE):
                row = by_kind[kind].get(phase)
                if row is None:
                    cells += ["-", "-"]
                else:
                    cells += [str(row.count), "[" + ", ".join(str(d) for d in row.shape) + "]"]
            lines.append(f"| {kind.value} | {cells[0]} | {cells[1]} | {cells[2]} | {cells[3]} |")
        return "\n".join(lines)


def summarize(log: EventLog) -> ScheduleSummary:
    """Aggregate an event log into per-(phase, kind) rows plus stage views."""
    all_rows = _rows_for_mask(log, np.ones(len(log), dtype=bool))
    per_stage = {
        stage: _rows_for_mask(log, log.stages == stage)
        for stage in range(log.layout.pp)
    }
    return ScheduleSummary(
        rows=all_rows,
        per_stage=per_stage,
        tp=log.layout.tp,
        pp=log.layout.pp,
        bytes_per_element=log.arch.bytes_per_element,
    )
