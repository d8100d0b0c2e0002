"""Hot loops behind the simulator, with numba and pure-numpy variants.

The expansion of a per-pass slot template into the full event log, and the
per-pass cost reduction used by the latency layer, dominate runtime for long
decode sweeps. Both carry a jit-compiled implementation and a vectorised
numpy fallback producing bit-identical arrays. Selection happens once at
import from ``COMMSCOPE_BACKEND``: ``numba``, ``numpy``, or ``auto``
(numba when importable).
"""

from __future__ import annotations

import os

import numpy as np

BACKEND_ENV = "COMMSCOPE_BACKEND"

KIND_ALLREDUCE = 0
KIND_ALLGATHER = 1
KIND_GATHER = 2
KIND_SEND = 3
KIND_RECV = 4

PHASE_PREFILL = 0
PHASE_DECODE = 1

# Column order shared with schedule.EventLog.
COLUMNS = (
    "kind",
    "phase",
    "step",
    "stage",
    "layer",
    "dim0",
    "dim1",
    "element_count",
    "bytes_on_wire",
    "group_size",
)


def _expand_numpy(kind_s, stage_s, layer_s, group_s, dim1_s, wire_unit_s,
                  vocab_shard, prefill_len, n_passes):
    # dim1_s < 0 marks the 1-D vocabulary gather; its wire unit is already a
    # whole event, every other unit is per token.
    n_slots = kind_s.shape[0]
    kind = np.tile(kind_s, n_passes)
    stage = np.tile(stage_s, n_passes)
    layer = np.tile(layer_s, n_passes)
    group = np.tile(group_s, n_passes)
    dim1 = np.tile(dim1_s, n_passes)
    wire_unit = np.tile(wire_unit_s, n_passes)
    step = np.repeat(np.arange(n_passes, dtype=np.int64), n_slots)
    phase = np.where(step > 0, PHASE_DECODE, PHASE_PREFILL).astype(np.int64)
    tokens = np.where(step == 0, prefill_len, 1)
    is_gather = dim1 < 0
    dim0 = np.where(is_gather, vocab_shard, tokens)
    element_count = np.where(is_gather, vocab_shard, tokens * dim1)
    wire = np.where(is_gather, wire_unit, tokens * wire_unit)
    return kind, phase, step, stage, layer, dim0, dim1, element_count, wire, group


def _pass_costs_numpy(step, cost, n_passes):
    return np.bincount(step, weights=cost, minlength=n_passes).astype(np.float64)


_NUMBA_KERNELS = None


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def expand(kind_s, stage_s, layer_s, group_s, dim1_s, wire_unit_s,
               vocab_shard, prefill_len, n_passes):
        n_slots = kind_s.shape[0]
        total = n_slots * n_passes
        kind = np.empty(total, np.int64)
        phase = np.empty(total, np.int64)
        step = np.empty(total, np.int64)
        stage = np.empty(total, np.int64)
        layer = np.empty(total, np.int64)
        dim0 = np.empty(total, np.int64)
        dim1 = np.empty(total, np.int64)
        element_count = np.empty(total, np.int64)
        wire = np.empty(total, np.int64)
        group = np.empty(total, np.int64)
        for k in range(n_passes):
            base = k * n_slots
            tokens = prefill_len if k == 0 else 1
            ph = PHASE_PREFILL if k == 0 else PHASE_DECODE
            for i in range(n_slots):
                j = base + i
                kind[j] = kind_s[i]
                stage[j] = stage_s[i]
                layer[j] = layer_s[i]
                group[j] = group_s[i]
                step[j] = k
                phase[j] = ph
                d1 = dim1_s[i]
                dim1[j] = d1
                if d1 < 0:
                    dim0[j] = vocab_shard
                    element_count[j] = vocab_shard
                    wire[j] = wire_unit_s[i]
                else:
                    dim0[j] = tokens
                    element_count[j] = tokens * d1
                    wire[j] = tokens * wire_unit_s[i]
        return kind, phase, step, stage, layer, dim0, dim1, element_count, wire, group

    @njit(cache=True)
    def pass_costs(step, cost, n_passes):
        out = np.zeros(n_passes, np.float64)
        for i in range(step.shape[0]):
            out[step[i]] += cost[i]
        return out

    return expand, pass_costs


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def available_backends() -> tuple[str, ...]:
    return ("numpy", "numba") if numba_available() else ("numpy",)


def get_kernels(backend: str):
    """Return ``(expand, pass_costs)`` for an explicit backend name."""
    global _NUMBA_KERNELS
    if backend == "numpy":
        return _expand_numpy, _pass_costs_numpy
    if backend == "numba":
        if _NUMBA_KERNELS is None:
            _NUMBA_KERNELS = _build_numba_kernels()
        return _NUMBA_KERNELS
    raise ValueError(f"backend must be 'numpy' or 'numba', got {backend!r}")


def _select_backend() -> str:
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if numba_available() else "numpy"
    if choice in ("numpy", "numba"):
        return choice
    raise ValueError(f"{BACKEND_ENV} must be auto, numpy, or numba, got {choice!r}")


ACTIVE_BACKEND = _select_backend()
expand_event_log, accumulate_pass_costs = get_kernels(ACTIVE_BACKEND)
