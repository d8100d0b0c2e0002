"""Event-level simulation: counts, shapes, ordering, and aggregation."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commscope import (
    CollectiveKind,
    CommEvent,
    ModelArch,
    ParallelismLayout,
    Phase,
    SequenceSpec,
    hybrid_volume,
    p2p_op_counts,
    preset,
    simulate,
    summarize,
)
from commscope.schedule import EventLog

SEQ = SequenceSpec(prefill_len=128, decode_len=128)
GRID_ARCH = ModelArch(name="grid", hidden_size=64, num_layers=8, vocab_size=256)


def rows_by_kind(summary, kind, phase):
    return [r for r in summary.rows if r.kind is kind and r.phase is phase]


class TestTensorParallelSchedule:
    def test_allreduce_counts_and_shapes_two_workers(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=1), SEQ)
        summary = summarize(log)
        (prefill,) = rows_by_kind(summary, CollectiveKind.ALLREDUCE, Phase.PREFILL)
        (decode,) = rows_by_kind(summary, CollectiveKind.ALLREDUCE, Phase.DECODE)
        assert (prefill.count, prefill.shape) == (65, (128, 4096))
        assert (decode.count, decode.shape) == (8255, (1, 4096))

    def test_gather_counts_and_shard_shapes(self):
        arch = preset("llama-3.1-8b")
        for tp, shard in ((2, 64128), (4, 32064)):
            summary = summarize(simulate(arch, ParallelismLayout(tp=tp, pp=1), SEQ))
            (prefill,) = rows_by_kind(summary, CollectiveKind.GATHER, Phase.PREFILL)
            (decode,) = rows_by_kind(summary, CollectiveKind.GATHER, Phase.DECODE)
            assert (prefill.count, prefill.shape) == (1, (shard,))
            assert (decode.count, decode.shape) == (127, (shard,))

    def test_prefill_message_sizes_across_presets(self):
        expected = {
            "llama-3.2-3b": (786432, 57, 6144, 7239),
            "llama-3.1-8b": (1048576, 65, 8192, 8255),
            "llama-2-13b": (1310720, 81, 10240, 10287),
        }
        for name, (pre_bytes, pre_count, dec_bytes, dec_count) in expected.items():
            summary = summarize(simulate(preset(name), ParallelismLayout(tp=2, pp=1), SEQ))
            (prefill,) = rows_by_kind(summary, CollectiveKind.ALLREDUCE, Phase.PREFILL)
            (decode,) = rows_by_kind(summary, CollectiveKind.ALLREDUCE, Phase.DECODE)
            assert (prefill.message_bytes, prefill.count) == (pre_bytes, pre_count)
            assert (decode.message_bytes, decode.count) == (dec_bytes, dec_count)

    def test_wire_bytes_carry_ring_correction(self):
        summary = summarize(simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=4, pp=1), SEQ))
        (prefill,) = rows_by_kind(summary, CollectiveKind.ALLREDUCE, Phase.PREFILL)
        # 2(d-1)/d at d=4 is 3/2 of the logical payload.
        assert prefill.total_wire_bytes * 2 == prefill.total_message_bytes * 3


class TestPipelineParallelSchedule:
    @pytest.mark.parametrize("pp,pre,dec", [(2, 2, 254), (4, 6, 762)])
    def test_boundary_transfer_counts(self, pp, pre, dec):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=1, pp=pp), SEQ)
        summary = summarize(log)
        for kind in (CollectiveKind.SEND, CollectiveKind.RECV):
            (prefill,) = rows_by_kind(summary, kind, Phase.PREFILL)
            (decode,) = rows_by_kind(summary, kind, Phase.DECODE)
            assert (prefill.count, prefill.shape) == (pre, (128, 4096))
            assert (decode.count, decode.shape) == (dec, (1, 4096))
        assert p2p_op_counts(pp, SEQ) == (pre, dec)

    def test_no_collectives_without_tensor_parallelism(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=1, pp=4), SEQ)
        kinds = {event.kind for event in log.filter(step=0)}
        assert kinds == {CollectiveKind.SEND, CollectiveKind.RECV}


class TestHybridSchedule:
    def test_stage_views_two_by_two(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        summary = summarize(log)
        stage0 = summary.select_stage(0)

        def counts(view, kind):
            by_phase = {r.phase: r.count for r in view.rows if r.kind is kind}
            return (by_phase.get(Phase.PREFILL, 0), by_phase.get(Phase.DECODE, 0))

        assert counts(stage0, CollectiveKind.ALLREDUCE) == (33, 4191)
        assert counts(stage0, CollectiveKind.GATHER) == (1, 127)
        assert counts(stage0, CollectiveKind.ALLGATHER) == (2, 254)
        assert counts(stage0, CollectiveKind.SEND) == (2, 254)
        assert counts(stage0, CollectiveKind.RECV) == (2, 254)

        stage1 = summary.select_stage(1)
        assert counts(stage1, CollectiveKind.ALLREDUCE) == (32, 4064)
        assert {r.kind for r in stage1.rows} == {CollectiveKind.ALLREDUCE}

    def test_boundary_slices_are_hidden_width_over_tp(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        summary = summarize(log)
        (send,) = rows_by_kind(summary, CollectiveKind.SEND, Phase.PREFILL)
        (gathered,) = rows_by_kind(summary, CollectiveKind.ALLGATHER, Phase.PREFILL)
        assert send.shape == (128, 2048)
        assert gathered.shape == (128, 4096)

    def test_event_order_within_a_pass(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        first_pass = list(log.filter(step=0))
        assert len(first_pass) == 72  # 1 + 32 + 6 + 32 + 1 slots

        embedding = first_pass[0]
        assert embedding.kind is CollectiveKind.ALLREDUCE
        assert embedding.stage == 0 and embedding.layer is None

        assert first_pass[1].layer == 0 and first_pass[2].layer == 0
        boundary = [event.kind for event in first_pass[33:39]]
        assert boundary == [
            CollectiveKind.SEND, CollectiveKind.RECV,
            CollectiveKind.SEND, CollectiveKind.RECV,
            CollectiveKind.ALLGATHER, CollectiveKind.ALLGATHER,
        ]
        closing = first_pass[-1]
        assert closing.kind is CollectiveKind.GATHER
        assert closing.shape == (64128,) and closing.stage == 0

    def test_for_rank_matches_owning_stage(self):
        summary = summarize(simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ))
        assert summary.for_rank(1).rows == summary.select_stage(0).rows
        assert summary.for_rank(2).rows == summary.select_stage(1).rows
        with pytest.raises(ValueError):
            summary.for_rank(4)
        with pytest.raises(ValueError):
            summary.select_stage(2)


class TestEventLog:
    def test_length_and_pass_count(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        assert len(log) == 9216
        assert log.num_passes == 128

    def test_filters_compose(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        decode_gathers = log.filter(phase=Phase.DECODE, kind=CollectiveKind.GATHER)
        assert len(decode_gathers) == 127
        one_pass_stage1 = log.filter(step=5, stage=1)
        assert len(one_pass_stage1) == 32

    def test_arrays_are_immutable(self):
        log = simulate(GRID_ARCH, ParallelismLayout(tp=2, pp=1),
                       SequenceSpec(prefill_len=4, decode_len=2))
        with pytest.raises(ValueError):
            log.bytes_on_wire[0] = 7

    def test_jsonl_round_trip_preserves_events(self):
        log = simulate(GRID_ARCH, ParallelismLayout(tp=2, pp=2),
                       SequenceSpec(prefill_len=4, decode_len=3))
        buffer = io.StringIO()
        log.to_jsonl(buffer)
        lines = buffer.getvalue().splitlines()
        assert len(lines) == len(log)
        payloads = [json.loads(line) for line in lines]
        assert payloads == [event.to_json_dict() for event in log]

    def test_jsonl_accepts_paths(self, tmp_path):
        log = simulate(GRID_ARCH, ParallelismLayout(tp=2, pp=1),
                       SequenceSpec(prefill_len=2, decode_len=2))
        path = tmp_path / "events.jsonl"
        log.to_jsonl(path)
        assert len(path.read_text().splitlines()) == len(log)

    def test_missing_columns_rejected(self):
        log = simulate(GRID_ARCH, ParallelismLayout(tp=2, pp=1),
                       SequenceSpec(prefill_len=2, decode_len=2))
        columns = {name: log.column(name) for name in ("kind", "phase")}
        with pytest.raises(ValueError, match="missing event columns"):
            EventLog(columns, log.arch, log.layout, log.seq)


class TestValidation:
    def test_more_stages_than_layers_rejected(self):
        with pytest.raises(ValueError, match="exceeds layer count"):
            simulate(GRID_ARCH, ParallelismLayout(tp=1, pp=9), SEQ)

    def test_boundary_slicing_requires_divisible_hidden(self):
        arch = ModelArch(name="odd", hidden_size=66, num_layers=8, vocab_size=128)
        with pytest.raises(ValueError, match="slice boundary transfers"):
            simulate(arch, ParallelismLayout(tp=4, pp=2), SEQ)

    def test_fractional_wire_bytes_rejected(self):
        arch = ModelArch(name="odd", hidden_size=3, num_layers=3,
                         vocab_size=9, bytes_per_element=1)
        with pytest.raises(ValueError, match="not integral"):
            simulate(arch, ParallelismLayout(tp=4, pp=1), SEQ)


class TestCommEvent:
    def test_shape_and_count_must_agree(self):
        with pytest.raises(ValueError, match="does not match shape"):
            CommEvent(kind=CollectiveKind.SEND, phase=Phase.PREFILL, step=0,
                      stage=0, layer=None, shape=(2, 3), element_count=7,
                      bytes_on_wire=12, group_size=2)

    def test_rejects_invalid_counts(self):
        with pytest.raises(ValueError):
            CommEvent(kind=CollectiveKind.SEND, phase=Phase.PREFILL, step=0,
                      stage=0, layer=None, shape=(2,), element_count=2,
                      bytes_on_wire=-1, group_size=2)

    def test_json_dict_is_plain_data(self):
        event = CommEvent(kind=CollectiveKind.GATHER, phase=Phase.DECODE, step=3,
                          stage=0, layer=None, shape=(10,), element_count=10,
                          bytes_on_wire=20, group_size=4)
        payload = event.to_json_dict()
        assert payload["kind"] == "Gather"
        assert payload["phase"] == "Decode"
        assert payload["shape"] == [10]
        json.dumps(payload)


class TestSummaryRendering:
    def test_csv_lists_rows_with_header(self):
        summary = summarize(simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=1), SEQ))
        text = summary.to_csv()
        lines = text.splitlines()
        assert lines[0] == (
            "phase,kind,count,shape,message_bytes,total_message_bytes,total_wire_bytes,group_size"
        )
        assert "Prefill,Allreduce,65,128x4096,1048576,68157440,68157440,2" in lines

    def test_markdown_pairs_phases_per_operation(self):
        summary = summarize(simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=1), SEQ))
        text = summary.to_markdown()
        assert "| Allreduce | 65 | [128, 4096] | 8255 | [1, 4096] |" in text
        assert "| Gather | 1 | [64128] | 127 | [64128] |" in text

    def test_summary_volume_matches_log_volume(self):
        log = simulate(preset("llama-3.1-8b"), ParallelismLayout(tp=2, pp=2), SEQ)
        assert summarize(log).volume() == log.wire_volume()


class TestOracleEquivalence:
    @pytest.mark.parametrize("tp,pp", [(1, 1), (2, 1), (1, 2), (2, 2), (4, 2), (8, 4)])
    def test_log_totals_match_closed_form(self, tp, pp):
        arch = preset("llama-3.1-8b")
        layout = ParallelismLayout(tp=tp, pp=pp)
        log = simulate(arch, layout, SEQ)
        assert log.wire_volume() == hybrid_volume(arch, layout, SEQ)

    @settings(max_examples=60, deadline=None)
    @given(
        tp=st.sampled_from([1, 2, 4, 8]),
        pp=st.sampled_from([1, 2, 4]),
        prefill=st.integers(1, 40),
        decode=st.integers(1, 40),
    )
    def test_log_totals_match_closed_form_on_random_shapes(self, tp, pp, prefill, decode):
        seq = SequenceSpec(prefill_len=prefill, decode_len=decode)
        layout = ParallelismLayout(tp=tp, pp=pp)
        log = simulate(GRID_ARCH, layout, seq)
        assert log.wire_volume() == hybrid_volume(GRID_ARCH, layout, seq)
        assert len(log) == len(log.filter(step=0)) * seq.num_passes
