"""Shared fixtures.

The jit-compiled kernels are warmed once per session so timing-sensitive
tests measure steady-state behaviour, not compilation.
"""

import pytest

from commscope import ParallelismLayout, SequenceSpec, preset, simulate, summarize


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    log = simulate(
        preset("llama-3.1-8b"),
        ParallelismLayout(tp=2, pp=2),
        SequenceSpec(prefill_len=4, decode_len=2),
    )
    summarize(log)
    return log
