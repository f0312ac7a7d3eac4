"""Core model: retire width, LSQ merging, dispatch, stores."""

import pytest

from sectorsim.cache import HIT, WAIT
from sectorsim.config import SimConfig
from sectorsim.core import Core, NEVER
from sectorsim.traces import TraceEntry, gen_random, gen_seqwords
from sectorsim.types import Kind


class StubHier:
    """Fixed-latency memory stand-in; latency None never completes a load."""

    def __init__(self, latency=4):
        self.latency = latency
        self.calls = []

    def access(self, core, token, kind, addr, mask, pc, word, now):
        self.calls.append((now, kind, addr, mask))
        if kind is Kind.WRITE:
            return (HIT, now)
        if self.latency is None:
            return (WAIT,)
        return (HIT, now + self.latency)


def make_core(trace, max_insts=None, latency=4, **over):
    over.setdefault("mode", "la")
    cfg = SimConfig(cores=1, **over)
    hier = StubHier(latency)
    return Core(cfg, 0, hier, trace, max_insts=max_insts), hier


def drive(core, limit=200_000):
    t = 0
    while t < limit:
        nxt = core.tick(t)
        if core.done():
            return
        if nxt >= NEVER:
            return  # asleep; the stub never delivers fills
        t = nxt
    pytest.fail("core did not settle")


def loads(addrs, bubbles=0, kind="R"):
    return [TraceEntry(bubbles, 0x400, a, kind) for a in addrs]


def test_bubble_trace_retires_four_wide():
    trace = [TraceEntry(100, 0x400, 0x1000, "R")]
    core, hier = make_core(trace, max_insts=100)
    drive(core)
    assert core.done()
    assert core.retired == 100
    assert not hier.calls  # the load sits past the instruction cap
    # fetch starts at cycle 0, retire drains 4 per cycle from cycle 1
    assert core.cycles == 100 // 4 + 1
    assert core.ipc() == pytest.approx(100 / 26)


def test_bubble_ipc_approaches_retire_width():
    trace = [TraceEntry(10_000, 0x400, 0x1000, "R")]
    core, _ = make_core(trace, max_insts=10_000)
    drive(core)
    assert core.ipc() > 3.99


def test_store_only_trace_runs_at_retire_width():
    trace = loads(range(0, 100 * 64, 64), kind="W")
    core, hier = make_core(trace)
    drive(core)
    assert core.done()
    assert core.retired == 100
    assert core.n_stores == 100
    assert len(hier.calls) == 100
    assert core.cycles == 100 // 4 + 1
    assert core.ipc() > 3.7


def test_lookahead_merges_words_into_oldest():
    trace = loads([0x1000, 0x1008, 0x1010])  # words 0, 1, 2 of one block
    core, hier = make_core(trace, latency=None)
    drive(core)
    assert len(hier.calls) == 1
    now, kind, addr, mask = hier.calls[0]
    assert mask == 0b111
    assert addr == 0x1000
    assert core.n_subsumed == 2
    assert core.n_dispatched == 1


def test_distinct_blocks_do_not_merge():
    trace = loads([0x1000, 0x2000])
    core, hier = make_core(trace, latency=None)
    drive(core)
    assert [c[3] for c in hier.calls] == [0b1, 0b1]
    assert core.n_subsumed == 0


def test_seqwords_one_full_mask_request_per_block():
    trace = list(gen_seqwords(6))
    core, hier = make_core(trace, latency=None)
    drive(core)
    assert core.n_loads == 48
    assert len(hier.calls) == 6
    assert all(c[3] == 0xFF for c in hier.calls)
    blocks = [c[2] >> 6 for c in hier.calls]
    assert blocks == sorted(blocks)


def test_lookahead_depth_zero_issues_every_load():
    trace = list(gen_seqwords(4))
    core, hier = make_core(trace, latency=None, mode="basic")
    drive(core)
    assert core.n_subsumed == 0
    assert len(hier.calls) == 32  # the stub applies no MSHR bound


def test_infinite_latency_load_blocks_window_head():
    trace = [TraceEntry(0, 0x400, 0x1000, "R"),
             TraceEntry(300, 0x400, 0x2000, "R")]
    core, hier = make_core(trace, max_insts=200, latency=None)
    t = 0
    while t < 10_000:
        nxt = core.tick(t)
        if nxt >= NEVER:
            break
        t = nxt
    assert not core.done()
    assert core.retired == 0
    assert core.occ == core.cfg.window_entries
    assert len(hier.calls) == 1


def test_retired_matches_trace_instruction_count():
    trace = list(gen_random(seed=3, n_accesses=400, footprint_bytes=1 << 20,
                            bubbles=4))
    total = sum(e.bubbles + 1 for e in trace)
    core, hier = make_core(trace)
    drive(core)
    assert core.done()
    assert core.retired == total
    assert core.finish_cycle is not None


def test_instruction_cap_cuts_fetch():
    trace = list(gen_random(seed=3, n_accesses=100, footprint_bytes=1 << 20,
                            bubbles=4))
    core, _ = make_core(trace, max_insts=42)
    drive(core)
    assert core.retired == 42


def test_lookahead_off_one_request_per_load():
    trace = list(gen_random(seed=5, n_accesses=300, footprint_bytes=1 << 16,
                            bubbles=2))
    core, hier = make_core(trace, mode="basic")
    drive(core)
    assert core.n_dispatched == core.n_loads == 300
    assert core.n_subsumed == 0


def test_deeper_lookahead_never_issues_more_requests():
    trace = list(gen_random(seed=7, n_accesses=2000, footprint_bytes=1 << 14,
                            bubbles=0))
    counts = []
    for depth in (0, 4, 128):
        core, _ = make_core(trace, la_depth=depth)
        drive(core)
        assert core.done()
        counts.append(core.n_dispatched)
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[2] < counts[0]  # the tight footprint must actually merge
