"""Cache hierarchy tests: sector miss handling, MSHR chaining, inclusion,
writebacks, and a differential check against an independent block-granularity
model in full-mask mode."""
import pytest

from sectorsim.cache import HIT, STALL, WAIT, Hierarchy, ceil_div
from sectorsim.config import build_config
from sectorsim.types import Kind


class FakeMem:
    def __init__(self, accept_pf=True):
        self.reads = []
        self.writes = []
        self.pf = []
        self.accept_pf = accept_pf

    def submit_read(self, req):
        self.reads.append(req)

    def submit_write(self, req):
        self.writes.append(req)

    def submit_prefetch(self, req):
        if self.accept_pf:
            self.pf.append(req)
            return True
        return False


def make_h(**over):
    base = dict(cores=1, mode="basic", l3_policy="lru", l1_kib=1, l1_ways=2,
                l2_kib=2, l2_ways=2, l3_mib=1)
    base.update(over)
    cfg = build_config({}, **base)
    mem = FakeMem()
    done = []
    h = Hierarchy(cfg, mem, lambda tok, cyc: done.append((tok, cyc)))
    return cfg, mem, done, h


def drain(h, mem, t):
    """Complete all outstanding DRAM reads and apply every scheduled fill."""
    guard = 0
    while mem.reads or h._fills:
        for req in mem.reads:
            h.on_dram_fill(req, req.enqueue_cycle + 30)
        mem.reads.clear()
        t += 1000
        h.run_fills_due(t)
        guard += 1
        assert guard < 200, "fill cascade did not settle"
    return t


def test_miss_then_hit_with_l1_latency():
    cfg, mem, done, h = make_h()
    r = h.access(0, "t0", Kind.READ, 0x1000, 0b1, pc=0x40, word=0, now=0)
    assert r == (WAIT,)
    assert len(mem.reads) == 1 and mem.reads[0].mask == 0b1
    t = drain(h, mem, 0)
    assert [tok for tok, _ in done] == ["t0"]
    r = h.access(0, "t1", Kind.READ, 0x1000, 0b1, pc=0x40, word=0, now=t)
    assert r == (HIT, t + cfg.l1_latency)
    assert h.stat["l1_hits"] == 1


def test_sequential_words_chain_and_reclassify():
    # eight loads to words 0..7 of one block: one cache miss, then each
    # replay in turn owns a one-sector fetch: seven sector misses.
    cfg, mem, done, h = make_h()
    for w in range(8):
        r = h.access(0, f"t{w}", Kind.READ, 64 * 100 + 8 * w, 1 << w,
                     pc=0x40, word=w, now=w)
        assert r == (WAIT,)
    assert h.stat["l1_cache_misses"] == 1
    assert h.stat["l1_chained"] == 7
    assert len(h.mshr[0]) == 1
    masks = []
    t = 8
    guard = 0
    while mem.reads:
        req = mem.reads.pop(0)
        masks.append(req.mask)
        h.on_dram_fill(req, req.enqueue_cycle + 30)
        t += 1000
        h.run_fills_due(t)
        guard += 1
        assert guard < 20
    assert masks == [1 << w for w in range(8)]
    assert h.stat["l1_sector_misses"] == 7
    assert [tok for tok, _ in done] == [f"t{w}" for w in range(8)]
    assert len(h.mshr[0]) == 0


def test_merged_mask_fetches_once():
    cfg, mem, done, h = make_h()
    r = h.access(0, "t0", Kind.READ, 0, 0xFF, pc=0x40, word=0, now=0)
    assert r == (WAIT,)
    drain(h, mem, 0)
    assert h.stat["l1_cache_misses"] == 1
    assert h.stat["l1_sector_misses"] == 0
    assert len(done) == 1


def test_mshr_capacity_stalls_new_blocks_only():
    cfg, mem, done, h = make_h(mshrs=4)
    for i in range(4):
        assert h.access(0, f"t{i}", Kind.READ, 64 * i, 0b1, 0x40, 0, now=i) == (WAIT,)
    assert h.access(0, "t9", Kind.READ, 64 * 9, 0b1, 0x40, 0, now=5) == (STALL,)
    # chaining onto an in-flight block needs no new entry
    assert h.access(0, "tc", Kind.READ, 64 * 2 + 8, 0b10, 0x40, 1, now=6) == (WAIT,)
    t = drain(h, mem, 6)
    assert h.access(0, "t9", Kind.READ, 64 * 9, 0b1, 0x40, 0, now=t) == (WAIT,)


def test_predictor_trains_on_eviction_and_narrows_fetch():
    cfg, mem, done, h = make_h(mode="lasp", l1_ways=1)
    h.record_fetch_masks = True
    # first touch: table holds all-ones, fetch is widened to the full block
    h.access(0, "a0", Kind.READ, 0, 0b1000, pc=0x4000, word=3, now=0)
    assert h.fetch_log[-1][2] == 0xFF
    t = drain(h, mem, 0)
    # conflicting block evicts it; eviction trains the table with used={3}
    h.access(0, "b0", Kind.READ, 64 * 16, 0b1, pc=0x8000, word=0, now=t)
    t = drain(h, mem, t)
    t += 10
    # same pc/word misses again: prediction now narrows to the used sector
    h.access(0, "a1", Kind.READ, 0, 0b1000, pc=0x4000, word=3, now=t)
    assert h.fetch_log[-1][2] == 0b1000
    drain(h, mem, t)


def test_store_allocates_without_fetch_and_writes_back_union():
    cfg, mem, done, h = make_h()
    h.access(0, None, Kind.WRITE, 0, 0b100, pc=0x40, word=2, now=0)
    h.access(0, None, Kind.WRITE, 40, 0b100000, pc=0x44, word=5, now=10)
    assert mem.reads == [] and mem.writes == []
    slot = h.l1[0].find(0)
    assert slot.valid == 0b100100 and slot.dirty == 0b100100
    # force the block out of L3: sixteen conflicting fills in its set
    t = 100
    for k in range(1, 17):
        h.access(0, f"c{k}", Kind.READ, 64 * 1024 * k, 0b1, 0x50, 0, now=t)
        t = drain(h, mem, t)
    assert h.stat["writebacks"] == 1
    wb = mem.writes[0]
    assert wb.kind is Kind.WRITE and wb.writeback
    assert wb.mask == 0b100100 and wb.block == 0
    # back-invalidation removed every upper-level copy
    assert h.l1[0].find(0) is None
    assert h.l2[0].find(0) is None
    assert h.l3.find(0) is None


def test_lip_inserts_at_lru_and_retains_early_blocks():
    cfg, mem, done, h = make_h(l3_policy="lip")
    t = 0
    for k in range(17):
        h.access(0, f"t{k}", Kind.READ, 64 * 1024 * k, 0b1, 0x40, 0, now=t)
        t = drain(h, mem, t)
    set0 = h.l3.sets[0]
    blocks = [s.block for s in set0]
    assert blocks == [1024 * k for k in list(range(15)) + [16]]
    # an L3 hit (block long gone from L1/L2) promotes to MRU
    h.access(0, "h", Kind.READ, 64 * 1024 * 7, 0b1, 0x40, 0, now=t)
    assert set0[0].block == 1024 * 7


def test_force_full_masks_widen_every_fetch():
    cfg, mem, done, h = make_h(force_full_masks=True)
    t = 0
    for i in range(5):
        h.access(0, f"t{i}", Kind.READ, 64 * i + 8, 0b10, 0x40, 1, now=t)
        t = drain(h, mem, t)
    h.access(0, None, Kind.WRITE, 64 * 50 + 16, 0b100, 0x44, 2, now=t)
    t = drain(h, mem, t)
    assert all(r.mask == 0xFF for r in mem.reads[:5])


def test_force_full_store_residual_fetches_rest_of_line():
    cfg, mem, done, h = make_h(force_full_masks=True)
    h.access(0, None, Kind.WRITE, 16, 0b100, 0x44, 2, now=0)
    # the stored sector is supplied locally; the other seven are fetched
    assert len(mem.reads) == 1 and mem.reads[0].mask == 0xFF & ~0b100
    drain(h, mem, 0)
    slot = h.l1[0].find(0)
    assert slot.valid == 0xFF and slot.dirty == 0b100
    # a second store to an in-flight line never re-fetches
    h.access(0, None, Kind.WRITE, 64 * 2, 0b1, 0x44, 0, now=100)
    h.access(0, None, Kind.WRITE, 64 * 2 + 8, 0b10, 0x44, 1, now=101)
    assert len(mem.reads) == 1


def test_prefetch_trains_fills_llc_and_counts_useful():
    cfg, mem, done, h = make_h(pf_enable=True)
    t = 0
    for b in range(10, 15):
        h.access(0, f"t{b}", Kind.READ, 64 * b, 0b1, 0x40, 0, now=t)
        if mem.pf:
            break
        t = drain(h, mem, t)
    assert [r.block for r in mem.pf] == [18, 19, 20, 21]
    assert all(r.prefetch and r.mask == 0b1 for r in mem.pf)
    assert h.stat["pf_issued"] == 4
    for req in mem.pf:
        h.on_dram_fill(req, req.enqueue_cycle + 30)
    t += 1000
    h.run_fills_due(t)
    t = drain(h, mem, t)
    slot = h.l3.find(18)
    assert slot is not None and slot.prefetched and slot.valid == 0b1
    assert h.l1[0].find(18) is None  # LLC-only fill
    before_hits = h.stat["l3_hits"]
    h.access(0, "d", Kind.READ, 64 * 18, 0b1, 0x40, 0, now=t)
    assert h.stat["pf_useful"] == 1
    assert h.stat["l3_hits"] == before_hits + 1
    assert not h.l3.find(18).prefetched
    drain(h, mem, t)


class RefLevel:
    def __init__(self, sets, ways, lip=False):
        self.sets = [[] for _ in range(sets)]
        self.n_sets = sets
        self.ways = ways
        self.lip = lip

    def idx(self, block):
        return block & (self.n_sets - 1)

    def has(self, block):
        return block in self.sets[self.idx(block)]

    def promote(self, block):
        s = self.sets[self.idx(block)]
        s.remove(block)
        s.insert(0, block)

    def install(self, block):
        s = self.sets[self.idx(block)]
        victim = None
        if len(s) >= self.ways:
            victim = s.pop()
        if self.lip:
            s.append(block)
        else:
            s.insert(0, block)
        return victim


class RefInclusive:
    """Block-granularity inclusive LRU model used as the ordering oracle."""

    def __init__(self, cfg):
        self.l1 = RefLevel(cfg.l1_kib * 16 // cfg.l1_ways, cfg.l1_ways)
        self.l2 = RefLevel(cfg.l2_kib * 16 // cfg.l2_ways, cfg.l2_ways)
        self.l3 = RefLevel(cfg.l3_mib * 16384 // cfg.l3_ways, cfg.l3_ways)
        self.fetches = []

    def _install_l1(self, block):
        self.l1.install(block)

    def _install_l2(self, block):
        if self.l2.install(block) is not None:
            pass

    def _evict_l2_victim(self, v):
        if v is not None and self.l1.has(v):
            self.l1.sets[self.l1.idx(v)].remove(v)

    def _evict_l3_victim(self, v):
        if v is None:
            return
        for lvl in (self.l1, self.l2):
            if lvl.has(v):
                lvl.sets[lvl.idx(v)].remove(v)

    def load_walk(self, block, mask):
        if self.l1.has(block):
            self.l1.promote(block)
            return
        if self.l2.has(block):
            self.l2.promote(block)
            self._install_l1(block)
            return
        if self.l3.has(block):
            self.l3.promote(block)
            self._evict_l2_victim(self.l2.install(block))
            self._install_l1(block)
            return
        self.fetches.append((block, mask))
        self._evict_l3_victim(self.l3.install(block))
        self._evict_l2_victim(self.l2.install(block))
        self._install_l1(block)

    def access(self, block, word, is_store):
        if not is_store:
            self.load_walk(block, 0xFF)
            return
        # store: touch/install every level, then fetch the residual sectors;
        # the fetch reaches memory only when no level held the line
        in_l1 = self.l1.has(block)
        in_below = self.l2.has(block) or self.l3.has(block)
        if in_l1:
            self.l1.promote(block)
        else:
            self._install_l1(block)
        for lvl, on_evict in ((self.l2, self._evict_l2_victim),
                              (self.l3, self._evict_l3_victim)):
            if lvl.has(block):
                lvl.promote(block)
            else:
                on_evict(lvl.install(block))
        if not in_l1 and not in_below:
            self.fetches.append((block, 0xFF & ~(1 << word)))


def test_differential_full_mask_against_block_model():
    cfg, mem, done, h = make_h(force_full_masks=True)
    ref = RefInclusive(cfg)
    fetched = []
    state = 42
    t = 0
    for i in range(2500):
        state = (state * 6364136223846793005 + 1442695040888963407) % 2**64
        if state % 100 < 70:
            block = (state >> 8) % 128
        else:
            block = (state >> 8) % 40000
        word = (state >> 48) % 8
        is_store = (state >> 60) % 4 == 0
        kind = Kind.WRITE if is_store else Kind.READ
        r = h.access(0, f"t{i}", kind, block * 64 + word * 8, 1 << word,
                     pc=0x40, word=word, now=t)
        assert r[0] != STALL
        fetched.extend((q.block, q.mask) for q in mem.reads)
        t = drain(h, mem, t)
        ref.access(block, word, is_store)

    assert fetched == ref.fetches
    for name, mine, theirs in (("l1", h.l1[0], ref.l1), ("l2", h.l2[0], ref.l2),
                               ("l3", h.l3, ref.l3)):
        got = [[s.block for s in st] for st in mine.sets]
        want = [list(st) for st in theirs.sets]
        assert got == want, f"{name} tag or recency state diverged"


def test_invariants_after_async_sectored_run():
    cfg, mem, done, h = make_h(mode="lasp", l3_mib=1)
    state = 9
    t = 0
    for i in range(3000):
        state = (state * 6364136223846793005 + 1442695040888963407) % 2**64
        block = (state >> 8) % ((1 << 14) + 777)
        word = (state >> 48) % 8
        is_store = (state >> 60) % 4 == 0
        kind = Kind.WRITE if is_store else Kind.READ
        h.access(0, f"t{i}", kind, block * 64 + word * 8, 1 << word,
                 pc=(state >> 16) % 2**20, word=word, now=t)
        t += 3
        if i % 37 == 0:
            t = drain(h, mem, t)
    t = drain(h, mem, t)

    for core in range(cfg.cores):
        for st in h.l1[core].sets:
            for s in st:
                assert s.dirty & ~s.valid == 0
                assert s.used & ~s.valid == 0
                s2 = h.l2[core].find(s.block)
                assert s2 is not None and s.valid & ~s2.valid == 0
        for st in h.l2[core].sets:
            for s in st:
                s3 = h.l3.find(s.block)
                assert s3 is not None and s.valid & ~s3.valid == 0
    assert len(h.mshr[0]) == 0
    assert not h._fills and not h._dram_jobs
