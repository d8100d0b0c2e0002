"""Model, parallelism, and sequence descriptions shared by every other module.

Built-in presets cover the dense Llama variants the toolkit was calibrated
against. Additional models can be supplied as JSON files whose keys mirror
the ``ModelArch`` field names; pointing ``COMMSCOPE_PRESET_DIR`` at a
directory of such files makes them addressable by name like the built-ins.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

PRESET_DIR_ENV = "COMMSCOPE_PRESET_DIR"


class UnknownPresetError(LookupError):
    """Requested preset matches neither a built-in nor a preset file."""


def _require_positive(value: object, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")


def _check_keys(payload: dict, cls: type, what: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ValueError(f"unknown {what} keys: {', '.join(unknown)}")


@dataclass(frozen=True)
class ModelArch:
    """Dense transformer dimensions that determine communication sizes.

    ``num_heads`` and ``head_dim`` are optional bookkeeping; when both are
    given their product must equal ``hidden_size``. Activation width defaults
    to 2 bytes per element (fp16/bf16 serving).
    """

    name: str
    hidden_size: int
    num_layers: int
    vocab_size: int
    num_heads: int | None = None
    head_dim: int | None = None
    bytes_per_element: int = 2

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("name must be non-empty")
        for attr in ("hidden_size", "num_layers", "vocab_size", "bytes_per_element"):
            _require_positive(getattr(self, attr), attr)
        if self.num_heads is not None:
            _require_positive(self.num_heads, "num_heads")
        if self.head_dim is not None:
            _require_positive(self.head_dim, "head_dim")
        if self.num_heads is not None and self.head_dim is not None:
            if self.num_heads * self.head_dim != self.hidden_size:
                raise ValueError(
                    f"num_heads * head_dim = {self.num_heads * self.head_dim} "
                    f"does not match hidden_size = {self.hidden_size}"
                )

    def vocab_shard(self, tp: int) -> int:
        """Per-worker slice of the vocabulary dimension, rounded up."""
        _require_positive(tp, "tp")
        return -(-self.vocab_size // tp)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "vocab_size": self.vocab_size,
            "num_heads": self.num_heads,
            "head_dim": self.head_dim,
            "bytes_per_element": self.bytes_per_element,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelArch":
        _check_keys(payload, cls, "model")
        return cls(**payload)


@dataclass(frozen=True)
class ParallelismLayout:
    """Worker grid of ``tp`` tensor-parallel ranks inside each of ``pp`` stages.

    Ranks are numbered TP-major: stage ``s`` owns global ranks
    ``s*tp .. s*tp + tp - 1``. ``placement`` maps each global rank to a node
    index; it defaults to a single node and is only consulted by the latency
    layer when deciding which transfers cross node boundaries.
    """

    tp: int
    pp: int
    placement: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        _require_positive(self.tp, "tp")
        _require_positive(self.pp, "pp")
        n = self.tp * self.pp
        placement = tuple(int(x) for x in self.placement) if self.placement else (0,) * n
        object.__setattr__(self, "placement", placement)
        if len(placement) != n:
            raise ValueError(f"placement covers {len(placement)} ranks, expected {n}")
        if min(placement) < 0:
            raise ValueError("node indices must be non-negative")
        seen = sorted(set(placement))
        if seen != list(range(len(seen))):
            raise ValueError("node indices must be contiguous starting at 0")

    @classmethod
    def packed(cls, tp: int, pp: int, gpus_per_node: int) -> "ParallelismLayout":
        """Layout filling nodes in rank order, ``gpus_per_node`` ranks per node."""
        _require_positive(gpus_per_node, "gpus_per_node")
        n = tp * pp
        return cls(tp, pp, tuple(r // gpus_per_node for r in range(n)))

    @property
    def num_ranks(self) -> int:
        return self.tp * self.pp

    @property
    def num_stages(self) -> int:
        return self.pp

    @property
    def num_nodes(self) -> int:
        return max(self.placement) + 1

    def stage_of(self, rank: int) -> int:
        if not 0 <= rank < self.num_ranks:
            raise ValueError(f"rank {rank} out of range for {self.num_ranks} ranks")
        return rank // self.tp

    def stage_ranks(self, stage: int) -> range:
        if not 0 <= stage < self.pp:
            raise ValueError(f"stage {stage} out of range for pp={self.pp}")
        return range(stage * self.tp, (stage + 1) * self.tp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "pp": self.pp, "placement": list(self.placement)}

    @classmethod
    def from_dict(cls, payload: dict) -> "ParallelismLayout":
        _check_keys(payload, cls, "layout")
        payload = dict(payload)
        placement = payload.get("placement")
        if isinstance(placement, dict):
            # JSON objects key ranks as strings; normalise to a rank-ordered tuple.
            by_rank = {int(k): int(v) for k, v in placement.items()}
            if sorted(by_rank) != list(range(len(by_rank))):
                raise ValueError("placement mapping must cover ranks 0..n-1")
            payload["placement"] = tuple(by_rank[r] for r in range(len(by_rank)))
        elif placement is not None:
            payload["placement"] = tuple(placement)
        return cls(**payload)


@dataclass(frozen=True)
class SequenceSpec:
    """Request shape: prompt length and number of generated tokens.

    ``decode_len`` counts every generated token, including the one sampled at
    the end of the prefill pass, so a run consists of one prefill pass plus
    ``decode_len - 1`` single-token decode passes.
    """

    prefill_len: int
    decode_len: int

    def __post_init__(self) -> None:
        _require_positive(self.prefill_len, "prefill_len")
        _require_positive(self.decode_len, "decode_len")

    @property
    def num_passes(self) -> int:
        return self.decode_len

    @property
    def processed_tokens(self) -> int:
        """Token positions pushed through the network across all passes."""
        return self.prefill_len + self.decode_len - 1

    def to_dict(self) -> dict:
        return {"prefill_len": self.prefill_len, "decode_len": self.decode_len}

    @classmethod
    def from_dict(cls, payload: dict) -> "SequenceSpec":
        _check_keys(payload, cls, "sequence")
        return cls(**payload)


def layers_per_stage(num_layers: int, pp: int) -> tuple[int, ...]:
    """Distribute layers over stages, earlier stages taking the larger share."""
    _require_positive(num_layers, "num_layers")
    _require_positive(pp, "pp")
    if pp > num_layers:
        raise ValueError(f"pp={pp} exceeds num_layers={num_layers}")
    q, r = divmod(num_layers, pp)
    return tuple(q + 1 if s < r else q for s in range(pp))


_BUILTIN_PRESETS: dict[str, ModelArch] = {
    "llama-3.2-3b": ModelArch(
        name="llama-3.2-3b",
        hidden_size=3072,
        num_layers=28,
        vocab_size=128256,
        num_heads=24,
        head_dim=128,
    ),
    "llama-3.1-8b": ModelArch(
        name="llama-3.1-8b",
        hidden_size=4096,
        num_layers=32,
        vocab_size=128256,
        num_heads=32,
        head_dim=128,
    ),
    "llama-2-13b": ModelArch(
        name="llama-2-13b",
        hidden_size=5120,
        num_layers=40,
        vocab_size=32000,
        num_heads=40,
        head_dim=128,
    ),
}


def _preset_dir() -> Path | None:
    raw = os.environ.get(PRESET_DIR_ENV, "").strip()
    return Path(raw) if raw else None


def known_presets() -> tuple[str, ...]:
    """Built-in preset names plus any JSON files in the preset directory."""
    names = set(_BUILTIN_PRESETS)
    directory = _preset_dir()
    if directory is not None and directory.is_dir():
        names.update(p.stem for p in directory.glob("*.json"))
    return tuple(sorted(names))


def load_model(path: str | Path) -> ModelArch:
    """Read a model definition from a JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise ValueError(f"model file {path} must contain a JSON object")
    return ModelArch.from_dict(payload)


def preset(name: str) -> ModelArch:
    """Look up a model by name, preferring ``COMMSCOPE_PRESET_DIR`` files."""
    directory = _preset_dir()
    if directory is not None:
        candidate = directory / f"{name}.json"
        if candidate.is_file():
            return load_model(candidate)
    try:
        return _BUILTIN_PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; known presets: {', '.join(known_presets())}"
        ) from None
