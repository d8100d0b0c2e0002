"""Command-line interface.

Subcommands: ``predict`` (closed-form volumes), ``simulate`` (event log and
summary), ``compare`` (observations vs. prediction), ``sweep`` (decode-length
CSV), and ``advise`` (layout ranking). Exit statuses: 0 success or match,
1 comparison mismatch, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analytic import (
    CollectiveKind,
    DegenerateLayoutError,
    correction_factor,
    hybrid_volume,
)
from .arch import (
    ModelArch,
    ParallelismLayout,
    SequenceSpec,
    UnknownPresetError,
    load_model,
    preset,
)
from .latency import (
    AdviceWeights,
    BUILTIN_PROFILES,
    HIERARCHICAL_PROFILE,
    HardwareProfile,
    LayoutError,
    NoFeasibleLayoutError,
    advise,
    estimate_slo,
    load_profile,
    sweep_decode_len,
    sweep_to_csv,
)
from .schedule import simulate, summarize
from .trace import ObservationParseError, diff, parse_observations

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_IO = 3

_FORMATS = ("table", "csv", "json")
_CONFIG_KEYS = ("model", "tp", "pp", "prefill_len", "decode_len", "hardware", "format")


class _UsageError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commscope",
        description="Communication-pattern modeling for distributed LLM inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", help="preset name or path to a model JSON file")
        p.add_argument("--config", help="JSON run configuration; flags override its values")
        p.add_argument("--tp", type=int, help="tensor-parallel degree (default 1)")
        p.add_argument("--pp", type=int, help="pipeline-parallel degree (default 1)")
        p.add_argument("--prefill", type=int, help="prompt length in tokens (default 128)")
        p.add_argument("--decode", type=int, help="generated tokens, incl. the first (default 128)")
        p.add_argument("--hardware", help="'flat', 'hierarchical', or a profile JSON path")
        p.add_argument("--format", choices=_FORMATS, help="output format (default table)")

    p_predict = sub.add_parser("predict", help="closed-form volume breakdown")
    add_common(p_predict)

    p_simulate = sub.add_parser("simulate", help="event-level schedule and summary")
    add_common(p_simulate)
    p_simulate.add_argument("--events", help="write the event log as JSON-lines to this path")
    p_simulate.add_argument("--stage", type=int, help="restrict the summary to one stage")

    p_compare = sub.add_parser("compare", help="diff observations against a fresh simulation")
    add_common(p_compare)
    p_compare.add_argument("--observations", required=True, help="JSON-lines observation file")
    p_compare.add_argument("--stage", type=int, help="compare against one stage's view")

    p_sweep = sub.add_parser("sweep", help="CSV of volumes across decode lengths")
    add_common(p_sweep)
    p_sweep.add_argument(
        "--decode-lens", required=True, help="comma-separated decode lengths, e.g. 128,256,512"
    )
    p_sweep.add_argument(
        "--layouts", help="comma-separated tp x pp pairs, e.g. 4x1,1x4,2x2 (default: --tp/--pp)"
    )
    p_sweep.add_argument("--output", help="write CSV here instead of stdout")

    p_advise = sub.add_parser("advise", help="rank parallelism layouts for a GPU budget")
    add_common(p_advise)
    p_advise.add_argument("--gpus", type=int, required=True, help="total GPU count to split")
    p_advise.add_argument(
        "--weights",
        default="0,0,1",
        help="ttft,tpot,e2e[,volume] objective weights (default 0,0,1)",
    )
    return parser


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise _UsageError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(payload) - set(_CONFIG_KEYS))
    if unknown:
        raise _UsageError(f"unknown config keys: {', '.join(unknown)}")
    return payload


def _resolve_model(name_or_path: str) -> ModelArch:
    candidate = Path(name_or_path)
    if candidate.suffix == ".json" or candidate.is_file():
        return load_model(candidate)
    return preset(name_or_path)


def _resolve_hardware(spec: str | None) -> HardwareProfile | None:
    if spec is None:
        return None
    if spec in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[spec]
    return load_profile(spec)


def _resolve_run(args: argparse.Namespace) -> tuple[ModelArch, ParallelismLayout, SequenceSpec, HardwareProfile | None, str]:
    config = _load_config_file(args.config) if args.config else {}

    def pick(flag_value, key: str, default):
        if flag_value is not None:
            return flag_value
        return config.get(key, default)

    model_spec = pick(args.model, "model", None)
    if model_spec is None:
        raise _UsageError("a model is required: pass --model or put 'model' in --config")
    fmt = pick(args.format, "format", "table")
    if fmt not in _FORMATS:
        raise _UsageError(f"format must be one of {', '.join(_FORMATS)}, got {fmt!r}")
    tp = pick(args.tp, "tp", 1)
    pp = pick(args.pp, "pp", 1)
    prefill = pick(args.prefill, "prefill_len", 128)
    decode = pick(args.decode, "decode_len", 128)
    arch = _resolve_model(model_spec)
    layout = ParallelismLayout(tp=tp, pp=pp)
    seq = SequenceSpec(prefill_len=prefill, decode_len=decode)
    hw = _resolve_hardware(pick(args.hardware, "hardware", None))
    return arch, layout, seq, hw, fmt


def _print_predict(arch, layout, seq, volume, fmt: str) -> None:
    if fmt == "json":
        payload = {
            "model": arch.name,
            "tp": layout.tp,
            "pp": layout.pp,
            "prefill_len": seq.prefill_len,
            "decode_len": seq.decode_len,
            "volume": volume.as_dict(),
        }
        print(json.dumps(payload, sort_keys=True))
        return
    pairs = [
        ("allreduce", volume.allreduce_bytes),
        ("allgather", volume.allgather_bytes),
        ("gather", volume.gather_bytes),
        ("p2p", volume.p2p_bytes),
        ("total", volume.total_bytes),
    ]
    if fmt == "csv":
        print("kind,bytes")
        for kind, value in pairs:
            print(f"{kind},{value}")
        return
    print(
        f"Communication volume: {arch.name}, tp={layout.tp}, pp={layout.pp}, "
        f"prefill={seq.prefill_len}, decode={seq.decode_len}"
    )
    for kind, value in pairs:
        print(f"  {kind:<10} {value:>16,} bytes")
    ar = correction_factor(CollectiveKind.ALLREDUCE, layout.tp)
    ag = correction_factor(CollectiveKind.ALLGATHER, layout.tp)
    print(
        f"Wire corrections at group {layout.tp}: allreduce 2(d-1)/d = {ar}, "
        f"allgather (d-1)/d = {ag}, gather and point-to-point 1"
    )


def cmd_predict(args: argparse.Namespace) -> int:
    arch, layout, seq, _, fmt = _resolve_run(args)
    volume = hybrid_volume(arch, layout, seq)
    _print_predict(arch, layout, seq, volume, fmt)
    return EXIT_OK


def _select_summary(log, stage: int | None):
    summary = summarize(log)
    if stage is not None:
        summary = summary.select_stage(stage)
    return summary


def cmd_simulate(args: argparse.Namespace) -> int:
    arch, layout, seq, _, fmt = _resolve_run(args)
    log = simulate(arch, layout, seq)
    if args.events:
        log.to_jsonl(args.events)
    summary = _select_summary(log, args.stage)
    if fmt == "json":
        print(json.dumps(summary.to_observation_dicts(), sort_keys=True))
    elif fmt == "csv":
        sys.stdout.write(summary.to_csv())
    else:
        print(summary.to_markdown())
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    arch, layout, seq, _, fmt = _resolve_run(args)
    with open(args.observations, "rb") as handle:
        observed = parse_observations(handle)
    log = simulate(arch, layout, seq)
    summary = _select_summary(log, args.stage)
    report = diff(observed, summary)
    if fmt == "json":
        print(json.dumps(report.to_json_dict(), sort_keys=True))
    else:
        print(report.to_markdown())
    return EXIT_OK if report.exact_match else EXIT_MISMATCH


def _parse_layouts(raw: str) -> list[ParallelismLayout]:
    layouts = []
    for chunk in raw.split(","):
        chunk = chunk.strip().lower()
        if not chunk:
            continue
        parts = chunk.split("x")
        if len(parts) != 2:
            raise _UsageError(f"layout {chunk!r} is not of the form TPxPP, e.g. 2x2")
        try:
            tp, pp = int(parts[0]), int(parts[1])
        except ValueError:
            raise _UsageError(f"layout {chunk!r} is not of the form TPxPP, e.g. 2x2") from None
        layouts.append(ParallelismLayout(tp=tp, pp=pp))
    if not layouts:
        raise _UsageError("--layouts must name at least one TPxPP pair")
    return layouts


def _parse_int_list(raw: str, what: str) -> list[int]:
    try:
        values = [int(chunk) for chunk in raw.split(",") if chunk.strip()]
    except ValueError:
        raise _UsageError(f"{what} must be comma-separated integers, got {raw!r}") from None
    if not values:
        raise _UsageError(f"{what} must name at least one value")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    arch, layout, seq, hw, _ = _resolve_run(args)
    decode_lens = _parse_int_list(args.decode_lens, "--decode-lens")
    layouts = _parse_layouts(args.layouts) if args.layouts else [layout]
    rows = sweep_decode_len(arch, layouts, seq.prefill_len, decode_lens, hw)
    csv_text = sweep_to_csv(rows)
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _parse_weights(raw: str) -> AdviceWeights:
    try:
        values = [float(chunk) for chunk in raw.split(",")]
    except ValueError:
        raise _UsageError(f"--weights must be comma-separated numbers, got {raw!r}") from None
    if len(values) == 3:
        values.append(0.0)
    if len(values) != 4:
        raise _UsageError("--weights takes 3 or 4 values: ttft,tpot,e2e[,volume]")
    return AdviceWeights(*values)


def cmd_advise(args: argparse.Namespace) -> int:
    arch, _, seq, hw, fmt = _resolve_run(args)
    hw = hw or HIERARCHICAL_PROFILE
    weights = _parse_weights(args.weights)
    ranked = advise(arch, hw, seq, weights, args.gpus)
    if fmt == "json":
        payload = [
            {
                "tp": advice.layout.tp,
                "pp": advice.layout.pp,
                "score": advice.score,
                "slo": advice.slo.as_dict(),
                "total_bytes": advice.total_bytes,
            }
            for advice in ranked
        ]
        print(json.dumps(payload, sort_keys=True))
        return EXIT_OK
    header = "rank,tp,pp,score,ttft_comm,tpot_comm,e2e_comm,total_bytes"
    if fmt == "csv":
        print(header)
        for position, advice in enumerate(ranked, start=1):
            print(
                f"{position},{advice.layout.tp},{advice.layout.pp},{advice.score!r},"
                f"{advice.slo.ttft_comm!r},{advice.slo.tpot_comm!r},"
                f"{advice.slo.e2e_comm!r},{advice.total_bytes}"
            )
        return EXIT_OK
    print(f"Layout ranking for {arch.name} on {args.gpus} GPUs ({hw.gpus_per_node}/node)")
    print(f"{'rank':>4} {'tp':>4} {'pp':>4} {'score':>14} {'ttft_comm':>12} {'tpot_comm':>12} {'total_bytes':>14}")
    for position, advice in enumerate(ranked, start=1):
        print(
            f"{position:>4} {advice.layout.tp:>4} {advice.layout.pp:>4} "
            f"{advice.score:>14.6e} {advice.slo.ttft_comm:>12.6e} "
            f"{advice.slo.tpot_comm:>12.6e} {advice.total_bytes:>14,}"
        )
    return EXIT_OK


_COMMANDS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "advise": cmd_advise,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ObservationParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_IO
    except (
        _UsageError,
        UnknownPresetError,
        DegenerateLayoutError,
        LayoutError,
        NoFeasibleLayoutError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
