"""Closed-form wire-volume accounting for tensor, pipeline, and hybrid layouts.

All byte totals are exact integers: correction factors are applied as exact
rationals and a result that fails to reduce to an integer raises instead of
rounding. Totals count each transfer once from the perspective of a
participating worker, which is what a per-rank profiler observes; the
event-level simulator in :mod:`commscope.schedule` reproduces the same
totals operation by operation.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from enum import Enum
from fractions import Fraction

from .arch import ModelArch, ParallelismLayout, SequenceSpec


class CollectiveKind(str, Enum):
    """Communication operation families the toolkit accounts for."""

    ALLREDUCE = "Allreduce"
    ALLGATHER = "Allgather"
    GATHER = "Gather"
    SEND = "Send"
    RECV = "Recv"


class DegenerateLayoutError(ValueError):
    """Layout moves no bytes, so a volume ratio is undefined."""


def correction_factor(kind: CollectiveKind, group_size: int) -> Fraction:
    """Multiplier from a collective's logical payload to bytes on the wire.

    Ring-style collectives move less than their logical payload per rank:
    2(d-1)/d for Allreduce and (d-1)/d for Allgather over d workers, which
    is 0 for a group of one. Gather and point-to-point transfers ship their
    payload unchanged.
    """
    if not isinstance(group_size, int) or group_size < 1:
        raise ValueError(f"group_size must be a positive integer, got {group_size!r}")
    if kind is CollectiveKind.ALLREDUCE:
        return Fraction(2 * (group_size - 1), group_size)
    if kind is CollectiveKind.ALLGATHER:
        return Fraction(group_size - 1, group_size)
    return Fraction(1)


@dataclass(frozen=True)
class VolumeBreakdown:
    """Wire bytes per operation family plus their total."""

    allreduce_bytes: int
    allgather_bytes: int
    gather_bytes: int
    p2p_bytes: int
    total_bytes: int

    def __post_init__(self) -> None:
        parts = (
            self.allreduce_bytes,
            self.allgather_bytes,
            self.gather_bytes,
            self.p2p_bytes,
        )
        if any(not isinstance(v, int) or v < 0 for v in parts):
            raise ValueError("per-kind byte counts must be non-negative integers")
        if self.total_bytes != sum(parts):
            raise ValueError(
                f"total_bytes={self.total_bytes} does not equal the sum of parts {sum(parts)}"
            )

    @classmethod
    def of(
        cls,
        allreduce: int = 0,
        allgather: int = 0,
        gather: int = 0,
        p2p: int = 0,
    ) -> "VolumeBreakdown":
        return cls(allreduce, allgather, gather, p2p, allreduce + allgather + gather + p2p)

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


def _exact_bytes(amount: Fraction, what: str) -> int:
    if amount.denominator != 1:
        raise ValueError(f"{what} does not reduce to whole bytes: {amount}")
    return int(amount)


def _gather_bytes(arch: ModelArch, tp: int, seq: SequenceSpec, all_senders: bool) -> int:
    # A gather over a group of one moves nothing; the logical-payload reading
    # of the closed form would charge the full vocabulary row here.
    if tp == 1:
        return 0
    senders = tp - 1 if all_senders else 1
    return seq.decode_len * senders * arch.vocab_shard(tp) * arch.bytes_per_element


def tp_volume(
    arch: ModelArch,
    tp: int,
    seq: SequenceSpec,
    gather_all_senders: bool = False,
) -> VolumeBreakdown:
    """Wire volume of a pure tensor-parallel run over ``tp`` workers.

    Each forward pass runs two Allreduces per layer plus one for the parallel
    vocabulary embedding, every one over the full hidden width, and each
    generated token ships one vocabulary-shard Gather. With
    ``gather_all_senders`` the gather is charged for all ``tp - 1`` sending
    workers instead of the single shard a per-rank profile sees.
    """
    if not isinstance(tp, int) or tp < 1:
        raise ValueError(f"tp must be a positive integer, got {tp!r}")
    tokens = seq.processed_tokens
    ops = 2 * arch.num_layers + 1
    logical = ops * tokens * arch.hidden_size * arch.bytes_per_element
    allreduce = _exact_bytes(
        logical * correction_factor(CollectiveKind.ALLREDUCE, tp), "allreduce volume"
    )
    return VolumeBreakdown.of(
        allreduce=allreduce,
        gather=_gather_bytes(arch, tp, seq, gather_all_senders),
    )


def pp_volume(arch: ModelArch, pp: int, seq: SequenceSpec) -> VolumeBreakdown:
    """Wire volume of a pure pipeline-parallel run over ``pp`` stages.

    Every stage boundary forwards two full-hidden-width tensors per pass.
    """
    if not isinstance(pp, int) or pp < 1:
        raise ValueError(f"pp must be a positive integer, got {pp!r}")
    tokens = seq.processed_tokens
    p2p = (pp - 1) * 2 * tokens * arch.hidden_size * arch.bytes_per_element
    return VolumeBreakdown.of(p2p=p2p)


def hybrid_volume(
    arch: ModelArch,
    layout: ParallelismLayout,
    seq: SequenceSpec,
    include_first_stage_embedding: bool = True,
    gather_all_senders: bool = False,
) -> VolumeBreakdown:
    """Wire volume of a combined tensor/pipeline run.

    Sums the layer Allreduces of every stage, the boundary Send/Recv slices
    and the Allgathers that rebuild the hidden width after each boundary, and
    the per-token vocabulary Gather. ``include_first_stage_embedding`` adds
    the first stage's embedding Allreduce (one more full-width operation per
    pass); with it set the ``pp = 1`` case reduces to :func:`tp_volume`, and
    ``tp = 1`` reduces to :func:`pp_volume`.
    """
    t, p = layout.tp, layout.pp
    tokens = seq.processed_tokens
    h, b = arch.hidden_size, arch.bytes_per_element
    positional = tokens * h * b

    ar_ops = 2 * arch.num_layers + (1 if include_first_stage_embedding else 0)
    allreduce = _exact_bytes(
        ar_ops * positional * correction_factor(CollectiveKind.ALLREDUCE, t),
        "allreduce volume",
    )
    allgather = _exact_bytes(
        2 * (p - 1) * positional * correction_factor(CollectiveKind.ALLGATHER, t),
        "allgather volume",
    )
    p2p = _exact_bytes(Fraction(2 * (p - 1) * positional, t), "point-to-point volume")
    return VolumeBreakdown.of(
        allreduce=allreduce,
        allgather=allgather,
        gather=_gather_bytes(arch, t, seq, gather_all_senders),
        p2p=p2p,
    )


def _sequence_driven_bytes(volume: VolumeBreakdown) -> int:
    return volume.total_bytes - volume.gather_bytes


def growth_factor(
    arch: ModelArch,
    layout: ParallelismLayout,
    seq_a: SequenceSpec,
    seq_b: SequenceSpec,
) -> float:
    """Ratio of sequence-driven wire volume between two request shapes.

    Allreduce, Allgather, and point-to-point traffic all scale with the
    processed-token count ``prefill_len + decode_len - 1``, so their ratio is
    the same for every layout. The vocabulary Gather tracks decode length
    alone and is excluded so the ratio reflects that shared scaling law.
    """
    base = _sequence_driven_bytes(hybrid_volume(arch, layout, seq_a))
    if base == 0:
        raise DegenerateLayoutError(
            "layout tp=1, pp=1 moves no sequence-driven bytes; ratio undefined"
        )
    grown = _sequence_driven_bytes(hybrid_volume(arch, layout, seq_b))
    return grown / base
