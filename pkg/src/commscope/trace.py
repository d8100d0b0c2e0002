"""Ingest profiler-style observations and diff them against predictions.

Observations arrive as JSON-lines, one record per line with the fields of
``ObservationRecord``. Counts and sizes are compared per (phase, kind) using
logical message bytes, the quantity a profiler reports, rather than
wire-corrected bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import prod
from typing import IO

from .analytic import CollectiveKind
from .schedule import KIND_ORDER, Phase, ScheduleSummary

_VALID_KINDS = tuple(kind.value for kind in CollectiveKind)
_VALID_PHASES = tuple(phase.value for phase in Phase)
_REQUIRED_FIELDS = ("phase", "kind", "count", "shape", "bytes_per_element")


class ObservationParseError(ValueError):
    """A line of the observation stream could not be understood."""

    def __init__(self, line_number: int, message: str, line: str = "") -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
        self.line = line


@dataclass(frozen=True)
class ObservationRecord:
    """One aggregated observation: how often a shape was moved in a phase."""

    phase: Phase
    kind: CollectiveKind
    count: int
    shape: tuple[int, ...]
    bytes_per_element: int
    group_size: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.count, int) or self.count < 0:
            raise ValueError(f"count must be a non-negative integer, got {self.count!r}")
        if not self.shape or any(not isinstance(d, int) or d < 1 for d in self.shape):
            raise ValueError(f"shape must be positive integers, got {self.shape!r}")
        if not isinstance(self.bytes_per_element, int) or self.bytes_per_element < 1:
            raise ValueError(
                f"bytes_per_element must be a positive integer, got {self.bytes_per_element!r}"
            )
        if self.group_size is not None and (
            not isinstance(self.group_size, int) or self.group_size < 1
        ):
            raise ValueError(f"group_size must be a positive integer, got {self.group_size!r}")

    @property
    def total_message_bytes(self) -> int:
        return self.count * prod(self.shape) * self.bytes_per_element


def _record_from_payload(payload: dict, line_number: int, line: str) -> ObservationRecord:
    if not isinstance(payload, dict):
        raise ObservationParseError(line_number, "record must be a JSON object", line)
    missing = [field for field in _REQUIRED_FIELDS if field not in payload]
    if missing:
        raise ObservationParseError(line_number, f"missing fields: {', '.join(missing)}", line)
    kind = payload["kind"]
    if kind not in _VALID_KINDS:
        raise ObservationParseError(
            line_number,
            f"unknown kind {kind!r}; valid kinds: {', '.join(_VALID_KINDS)}",
            line,
        )
    phase = payload["phase"]
    if phase not in _VALID_PHASES:
        raise ObservationParseError(
            line_number,
            f"unknown phase {phase!r}; valid phases: {', '.join(_VALID_PHASES)}",
            line,
        )
    extra = sorted(set(payload) - set(_REQUIRED_FIELDS) - {"group_size"})
    if extra:
        raise ObservationParseError(line_number, f"unknown fields: {', '.join(extra)}", line)
    try:
        return ObservationRecord(
            phase=Phase(phase),
            kind=CollectiveKind(kind),
            count=payload["count"],
            shape=tuple(payload["shape"]),
            bytes_per_element=payload["bytes_per_element"],
            group_size=payload.get("group_size"),
        )
    except (TypeError, ValueError) as exc:
        raise ObservationParseError(line_number, str(exc), line) from None


def parse_observations(source: str | bytes | IO) -> list[ObservationRecord]:
    """Parse a JSON-lines observation stream; errors carry the line number."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    records = []
    for line_number, line in enumerate(source.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ObservationParseError(line_number, f"invalid JSON: {exc.msg}", line) from None
        records.append(_record_from_payload(payload, line_number, line))
    return records


def observations_from_summary(summary: ScheduleSummary) -> list[ObservationRecord]:
    """Turn predicted summary rows into records, for export or round-trips."""
    return [
        ObservationRecord(
            phase=Phase(row["phase"]),
            kind=CollectiveKind(row["kind"]),
            count=row["count"],
            shape=tuple(row["shape"]),
            bytes_per_element=row["bytes_per_element"],
            group_size=row["group_size"],
        )
        for row in summary.to_observation_dicts()
    ]


@dataclass(frozen=True)
class DiffEntry:
    """Predicted versus observed figures for one (phase, kind)."""

    phase: Phase
    kind: CollectiveKind
    predicted_count: int
    observed_count: int
    count_delta: int
    predicted_shapes: tuple[tuple[int, ...], ...]
    observed_shapes: tuple[tuple[int, ...], ...]
    predicted_bytes: int
    observed_bytes: int
    bytes_delta: int

    @property
    def shapes_match(self) -> bool:
        return set(self.predicted_shapes) == set(self.observed_shapes)

    @property
    def clean(self) -> bool:
        return self.count_delta == 0 and self.bytes_delta == 0 and self.shapes_match


@dataclass(frozen=True)
class DiffReport:
    """Per-(phase, kind) deltas, observed minus predicted."""

    entries: tuple[DiffEntry, ...]
    exact_match: bool

    def to_json_dict(self) -> dict:
        return {
            "exact_match": self.exact_match,
            "entries": [
                {
                    "phase": e.phase.value,
                    "kind": e.kind.value,
                    "predicted_count": e.predicted_count,
                    "observed_count": e.observed_count,
                    "count_delta": e.count_delta,
                    "predicted_shapes": [list(s) for s in e.predicted_shapes],
                    "observed_shapes": [list(s) for s in e.observed_shapes],
                    "predicted_bytes": e.predicted_bytes,
                    "observed_bytes": e.observed_bytes,
                    "bytes_delta": e.bytes_delta,
                    "shapes_match": e.shapes_match,
                }
                for e in self.entries
            ],
        }

    def to_markdown(self) -> str:
        lines = [
            "| Phase | Operation | Predicted | Observed | Count delta | Shapes | Bytes delta |",
            "| --- | --- | --- | --- | --- | --- | --- |",
        ]
        for e in self.entries:
            shapes = "match" if e.shapes_match else (
                f"{[list(s) for s in e.predicted_shapes]} vs {[list(s) for s in e.observed_shapes]}"
            )
            lines.append(
                f"| {e.phase.value} | {e.kind.value} | {e.predicted_count} | "
                f"{e.observed_count} | {e.count_delta:+d} | {shapes} | {e.bytes_delta:+d} |"
            )
        lines.append("")
        lines.append(f"Exact match: {'yes' if self.exact_match else 'no'}")
        return "\n".join(lines)


def diff(observed: list[ObservationRecord], predicted: ScheduleSummary) -> DiffReport:
    """Compare observations against a predicted summary, keyed by (phase, kind).

    Deltas are observed minus predicted; a key present on only one side is
    compared against zero. Byte figures are logical message bytes.
    """
    pred: dict[tuple[Phase, CollectiveKind], dict] = {}
    for row in predicted.rows:
        agg = pred.setdefault((row.phase, row.kind), {"count": 0, "shapes": set(), "bytes": 0})
        agg["count"] += row.count
        agg["shapes"].add(row.shape)
        agg["bytes"] += row.total_message_bytes
    obs: dict[tuple[Phase, CollectiveKind], dict] = {}
    for record in observed:
        agg = obs.setdefault((record.phase, record.kind), {"count": 0, "shapes": set(), "bytes": 0})
        agg["count"] += record.count
        agg["shapes"].add(record.shape)
        agg["bytes"] += record.total_message_bytes
    if not pred and not obs:
        raise ValueError("nothing to compare: both observations and prediction are empty")

    kind_rank = {kind: i for i, kind in enumerate(KIND_ORDER)}
    keys = sorted(set(pred) | set(obs), key=lambda k: (k[0] is Phase.DECODE, kind_rank[k[1]]))
    empty = {"count": 0, "shapes": set(), "bytes": 0}
    entries = []
    for key in keys:
        p = pred.get(key, empty)
        o = obs.get(key, empty)
        entries.append(
            DiffEntry(
                phase=key[0],
                kind=key[1],
                predicted_count=p["count"],
                observed_count=o["count"],
                count_delta=o["count"] - p["count"],
                predicted_shapes=tuple(sorted(p["shapes"])),
                observed_shapes=tuple(sorted(o["shapes"])),
                predicted_bytes=p["bytes"],
                observed_bytes=o["bytes"],
                bytes_delta=o["bytes"] - p["bytes"],
            )
        )
    return DiffReport(
        entries=tuple(entries),
        exact_match=all(e.clean for e in entries),
    )
