"""Sectored three-level cache hierarchy with per-block MSHRs.

Every block frame carries a per-sector valid mask; a lookup hits only when the
demanded sectors are all valid. Misses fetch just the missing sectors, widened
by the sector predictor when enabled. The hierarchy is inclusive: L3 eviction
back-invalidates upper-level copies and folds their dirty sectors into the
victim's writeback.

Timing discipline: outcomes and request masks are decided at dispatch time by
walking the levels, but all state installation (validation, allocation,
eviction, SP training, writebacks) happens at fill-completion time. Accesses
that arrive while their block is already in flight chain onto the MSHR entry
and replay when the fill lands; a replay that still misses starts its own
fetch and is only then classified for statistics.
"""
from __future__ import annotations

import heapq

from .config import SimConfig
from .predictor import SectorPredictor
from .prefetch import StridePrefetcher
from .types import FULL_MASK, Kind, MemoryRequest, popcount


class Slot:
    __slots__ = ("block", "valid", "dirty", "used", "sht_index", "prefetched", "owners")

    def __init__(self, block: int) -> None:
        self.block = block
        self.valid = 0
        self.dirty = 0
        self.used = 0
        self.sht_index = -1
        self.prefetched = False
        self.owners = 0  # bitmask of cores caching this block (L3 only)


class CacheLevel:
    """One set-associative level; each set is a list ordered MRU first."""

    def __init__(self, kib: int, ways: int, lip: bool = False) -> None:
        blocks = kib * 1024 // 64
        if blocks % ways:
            raise ValueError("capacity must be a whole number of ways")
        self.ways = ways
        self.n_sets = blocks // ways
        if self.n_sets < 1 or self.n_sets & (self.n_sets - 1):
            raise ValueError(f"set count must be a power of two, got {self.n_sets}")
        self.lip = lip
        self.sets: list[list[Slot]] = [[] for _ in range(self.n_sets)]

    def set_index(self, block: int) -> int:
        return block & (self.n_sets - 1)

    def find(self, block: int) -> Slot | None:
        for slot in self.sets[self.set_index(block)]:
            if slot.block == block:
                return slot
        return None

    def promote(self, slot: Slot) -> None:
        s = self.sets[self.set_index(slot.block)]
        s.remove(slot)
        s.insert(0, slot)

    def allocate(self, block: int, protect=None) -> tuple[Slot, Slot | None]:
        """Install a new slot for block; returns (slot, evicted victim or None).

        `protect` is a predicate marking blocks that should not be victimized
        (in-flight fills); when every candidate is protected the true LRU is
        evicted anyway.
        """
        s = self.sets[self.set_index(block)]
        victim = None
        if len(s) >= self.ways:
            victim = None
            for cand in reversed(s):
                if protect is None or not protect(cand.block):
                    victim = cand
                    break
            forced = victim is None
            if forced:
                victim = s[-1]
            s.remove(victim)
            if forced:
                victim.owners |= 1 << 30  # marker consumed by caller stats
        slot = Slot(block)
        if self.lip:
            s.append(slot)  # insert at LRU: survives only if re-touched
        else:
            s.insert(0, slot)
        return slot, victim


class MSHREntry:
    __slots__ = ("block", "inflight", "sht_index", "deps")

    def __init__(self, block: int, inflight: int, sht_index: int) -> None:
        self.block = block
        self.inflight = inflight
        self.sht_index = sht_index
        # deps: (token, pc, word, demand, is_owner); owner first
        self.deps: list[tuple] = []


class _FillJob:
    __slots__ = ("core", "block", "entry", "level", "request")

    def __init__(self, core, block, entry, level, request=None):
        self.core = core
        self.block = block
        self.entry = entry
        self.level = level  # deepest level walked: 2, 3, or 4 (DRAM)
        self.request = request


HIT = "hit"
WAIT = "wait"
STALL = "stall"


class Hierarchy:
    def __init__(self, cfg: SimConfig, mem, complete_cb) -> None:
        self.cfg = cfg
        self.geom = cfg.geometry
        self.mem = mem
        self.complete_cb = complete_cb
        self.l1 = [CacheLevel(cfg.l1_kib, cfg.l1_ways) for _ in range(cfg.cores)]
        self.l2 = [CacheLevel(cfg.l2_kib, cfg.l2_ways) for _ in range(cfg.cores)]
        self.l3 = CacheLevel(cfg.l3_mib * 1024, cfg.l3_ways, lip=(cfg.l3_policy == "lip"))
        self.sp = [SectorPredictor(cfg.sp_entries) for _ in range(cfg.cores)] \
            if cfg.eff_sp else None
        self.pf = StridePrefetcher(cfg.pf_regions, cfg.pf_degree, cfg.pf_distance,
                                   cfg.pf_confirm) if cfg.pf_enable else None
        self.mshr: list[dict[int, MSHREntry]] = [{} for _ in range(cfg.cores)]
        self.l3_inflight: dict[int, int] = {}  # block -> prefetch mask in flight
        self._fills: list[tuple[int, int, _FillJob, int]] = []  # (cpu, seq, job, memc)
        self._fill_seq = 0
        self._dram_jobs: dict[int, _FillJob] = {}
        self.record_fetch_masks = False
        self.fetch_log: list[tuple[int, int, int]] = []

        z = [0] * cfg.cores
        self.stat = {
            "l1_hits": 0, "l1_cache_misses": 0, "l1_sector_misses": 0,
            "l1_chained": 0,
            "l2_hits": 0, "l2_cache_misses": 0, "l2_sector_misses": 0,
            "l3_hits": 0, "l3_cache_misses": 0, "l3_sector_misses": 0,
            "writebacks": 0, "writeback_sectors": 0,
            "pf_issued": 0, "pf_useful": 0, "pf_useless": 0,
            "forced_evictions": 0,
        }
        self.l3_misses_by_core = list(z)

    # ------------------------------------------------------------------ access

    def access(self, core: int, token, kind: Kind, addr: int, mask: int,
               pc: int, word: int, now: int):
        """Dispatch one memory access at cpu cycle `now`.

        Returns (HIT, complete_cycle), (WAIT,) with completion delivered via
        complete_cb, or (STALL,) when a new MSHR entry is needed and none is
        free.
        """
        block = self.geom.block_id(addr)
        if kind is Kind.WRITE:
            # stores validate exactly the written sectors; in full-mask mode
            # the rest of the line is fetched as a residual read instead
            return self._store(core, block, mask, pc, word, now)
        if self.cfg.eff_force_full:
            mask = FULL_MASK
        return self._load(core, token, block, mask, pc, word, now, replay=False)

    # ------------------------------------------------------------------ stores

    def _store(self, core: int, block: int, mask: int, pc: int, word: int, now: int):
        l1 = self.l1[core]
        slot = l1.find(block)
        valid_after = (slot.valid if slot else 0) | mask
        residual = 0
        if self.cfg.eff_force_full:
            residual = FULL_MASK & ~valid_after
            entry = self.mshr[core].get(block)
            if residual and entry is None and len(self.mshr[core]) >= self.cfg.mshrs:
                return (STALL,)
            if entry is not None:
                residual = 0  # outstanding fetch already covers the line

        if slot is None:
            slot, victim = l1.allocate(block, protect=None)
            if victim is not None:
                self._evict_l1(core, victim, now)
            if self.sp is not None:
                slot.sht_index = self.sp[core].index(pc, word)
        else:
            l1.promote(slot)
        slot.valid |= mask
        slot.dirty |= mask
        slot.used |= mask

        self._install_below(core, block, mask, now, ceil_div(now * 4, 9))

        if residual:
            self._load(core, None, block, residual, pc, word, now, replay=False,
                       fetch_only=True)
        return (HIT, now)

    def _install_below(self, core: int, block: int, mask: int, now: int,
                       mem_cycle: int) -> None:
        """Ensure L2/L3 hold `mask` for `block` (store path and fills)."""
        l2 = self.l2[core]
        slot2 = l2.find(block)
        if slot2 is None:
            slot2, victim = l2.allocate(block, protect=lambda b: b in self.mshr[core])
            if victim is not None:
                self._evict_l2(core, victim, now, mem_cycle)
        else:
            l2.promote(slot2)
        slot2.valid |= mask

        slot3 = self.l3.find(block)
        if slot3 is None:
            slot3, victim = self.l3.allocate(block, protect=self._l3_protected)
            if victim is not None:
                self._evict_l3(victim, now, mem_cycle)
        else:
            self.l3.promote(slot3)
        slot3.valid |= mask
        slot3.owners |= 1 << core
        if slot3.prefetched:
            slot3.prefetched = False
            self.stat["pf_useful"] += 1

    # ------------------------------------------------------------------- loads

    def _load(self, core: int, token, block: int, demand: int, pc: int,
              word: int, now: int, replay: bool, fetch_only: bool = False):
        l1 = self.l1[core]
        slot = l1.find(block)
        if slot is not None and demand & ~slot.valid == 0:
            slot.used |= demand
            l1.promote(slot)
            self.stat["l1_hits"] += 1
            done = now if replay else now + self.cfg.l1_latency
            if replay:
                self.complete_cb(token, done)
            return (HIT, done)

        entry = self.mshr[core].get(block)
        if entry is not None:
            self.stat["l1_chained"] += 1
            if not fetch_only:
                entry.deps.append((token, pc, word, demand, False))
            return (WAIT,)

        if len(self.mshr[core]) >= self.cfg.mshrs:
            assert not replay, "replay found no free MSHR entry"
            return (STALL,)

        # This access owns a new fetch; classify it now.
        if slot is None:
            self.stat["l1_cache_misses"] += 1
        else:
            self.stat["l1_sector_misses"] += 1

        sp_mask = 0
        sht_index = -1
        if self.sp is not None:
            sp_mask = self.sp[core].query(pc, word, now)
            sht_index = self.sp[core].index(pc, word)
        valid1 = slot.valid if slot else 0
        outgoing = (demand | sp_mask) & ~valid1
        if self.cfg.eff_force_full:
            outgoing = FULL_MASK & ~valid1
        assert outgoing, "miss with nothing to fetch"
        if self.record_fetch_masks:
            self.fetch_log.append((now, block, outgoing))

        entry = MSHREntry(block, outgoing, sht_index)
        # fetch-only owners (store residuals) do not mark sectors as used
        entry.deps.append((token, pc, word, 0 if fetch_only else demand, True))
        self.mshr[core][block] = entry

        level, request = self._walk_down(core, block, outgoing, now)
        job = _FillJob(core, block, entry, level, request)
        if level == 2:
            due = now + self.cfg.l2_latency
            self._push_fill(due, job, ceil_div(due * 4, 9))
        elif level == 3:
            due = now + self.cfg.l3_latency
            self._push_fill(due, job, ceil_div(due * 4, 9))
        else:
            self._dram_jobs[id(request)] = job  # claimed in on_dram_fill
        return (WAIT,)

    def _walk_down(self, core: int, block: int, outgoing: int, now: int):
        """Probe L2 and L3 for `outgoing`; returns (deepest level, request)."""
        l2 = self.l2[core]
        slot2 = l2.find(block)
        if slot2 is not None and outgoing & ~slot2.valid == 0:
            self.stat["l2_hits"] += 1
            l2.promote(slot2)
            return 2, None
        if slot2 is None:
            self.stat["l2_cache_misses"] += 1
            missing2 = outgoing
        else:
            self.stat["l2_sector_misses"] += 1
            missing2 = outgoing & ~slot2.valid
            l2.promote(slot2)

        slot3 = self.l3.find(block)
        if self.pf is not None:
            self._emit_prefetches(block, missing2, now)
        if slot3 is not None:
            if slot3.prefetched:
                slot3.prefetched = False
                self.stat["pf_useful"] += 1
            if missing2 & ~slot3.valid == 0:
                self.stat["l3_hits"] += 1
                self.l3.promote(slot3)
                slot3.owners |= 1 << core
                return 3, None
            self.stat["l3_sector_misses"] += 1
            missing3 = missing2 & ~slot3.valid
            self.l3.promote(slot3)
        else:
            self.stat["l3_cache_misses"] += 1
            missing3 = missing2
        self.l3_misses_by_core[core] += 1

        coords, _ = self.geom.decompose(block << 6)
        request = MemoryRequest(Kind.READ, coords, missing3, block, core=core,
                                enqueue_cycle=ceil_div((now + self.cfg.l3_latency) * 4, 9))
        self.mem.submit_read(request)
        return 4, request

    # -------------------------------------------------------------- prefetches

    def _emit_prefetches(self, block: int, mask: int, now: int) -> None:
        for pblock, pmask in self.pf.observe(block, mask):
            slot3 = self.l3.find(pblock)
            if slot3 is not None:
                pmask &= ~slot3.valid
            pmask &= ~self.l3_inflight.get(pblock, 0)
            if not pmask:
                continue
            coords, _ = self.geom.decompose(pblock << 6)
            req = MemoryRequest(Kind.READ, coords, pmask, pblock, core=0,
                                enqueue_cycle=ceil_div((now + self.cfg.l3_latency) * 4, 9),
                                prefetch=True)
            if self.mem.submit_prefetch(req):
                self.l3_inflight[pblock] = self.l3_inflight.get(pblock, 0) | pmask
                self.stat["pf_issued"] += 1

    # ----------------------------------------------------------------- fills

    def _push_fill(self, due_cpu: int, job: _FillJob, mem_cycle: int) -> None:
        self._fill_seq += 1
        heapq.heappush(self._fills, (due_cpu, self._fill_seq, job, mem_cycle))

    def next_fill_cycle(self) -> int | None:
        return self._fills[0][0] if self._fills else None

    def on_dram_fill(self, request: MemoryRequest, m_done: int) -> None:
        """Controller reports a finished read; schedule its cpu-side landing."""
        visible_cpu = ceil_div(m_done * 9, 4)
        if request.prefetch:
            job = _FillJob(-1, request.block, None, 4, request)
        else:
            job = self._dram_jobs.pop(id(request))
        self._push_fill(visible_cpu, job, m_done)

    def run_fills_due(self, now: int):
        """Apply every fill due at or before cpu cycle `now`.

        Returns the collection of cores that received a demand-path fill
        (empty when nothing landed); those are the only cores whose MSHR
        pressure can have eased.
        """
        if not self._fills or self._fills[0][0] > now:
            return ()
        cores: set = set()
        while self._fills and self._fills[0][0] <= now:
            due, _, job, memc = heapq.heappop(self._fills)
            if job.core < 0:
                self._apply_prefetch_fill(job.request, due, memc)
            else:
                self._apply_fill(job, due, memc)
                cores.add(job.core)
        return cores

    def prefetch_dropped(self, request: MemoryRequest) -> None:
        """A queued prefetch was discarded before reaching the device."""
        self._clear_inflight(request)

    def _clear_inflight(self, request: MemoryRequest) -> None:
        block = request.block
        left = self.l3_inflight.get(block, 0) & ~request.mask
        if left:
            self.l3_inflight[block] = left
        else:
            self.l3_inflight.pop(block, None)

    def _apply_prefetch_fill(self, request: MemoryRequest, now: int, mem_cycle: int) -> None:
        block = request.block
        self._clear_inflight(request)
        slot3 = self.l3.find(block)
        if slot3 is None:
            slot3, victim = self.l3.allocate(block, protect=self._l3_protected)
            if victim is not None:
                self._evict_l3(victim, now, mem_cycle)
            slot3.prefetched = True
        slot3.valid |= request.mask

    def _apply_fill(self, job: _FillJob, now: int, mem_cycle: int) -> None:
        core, block, entry = job.core, job.block, job.entry
        fmask = entry.inflight

        if job.level >= 3:
            slot3 = self.l3.find(block)
            if slot3 is None:
                slot3, victim = self.l3.allocate(block, protect=self._l3_protected)
                if victim is not None:
                    self._evict_l3(victim, now, mem_cycle)
            slot3.valid |= fmask
            slot3.owners |= 1 << core
        if job.level >= 2:
            l2 = self.l2[core]
            slot2 = l2.find(block)
            if slot2 is None:
                slot2, victim = l2.allocate(block, protect=lambda b: b in self.mshr[core])
                if victim is not None:
                    self._evict_l2(core, victim, now, mem_cycle)
            slot2.valid |= fmask

        l1 = self.l1[core]
        slot1 = l1.find(block)
        if slot1 is None:
            slot1, victim = l1.allocate(block, protect=None)
            if victim is not None:
                self._evict_l1(core, victim, now)
            slot1.sht_index = entry.sht_index
        slot1.valid |= fmask

        del self.mshr[core][block]

        for token, pc, word, demand, is_owner in entry.deps:
            if is_owner:
                slot1.used |= demand
                if token is not None:
                    self.complete_cb(token, now)
            else:
                self._load(core, token, block, demand, pc, word, now, replay=True)

    # -------------------------------------------------------------- evictions

    def _l3_protected(self, block: int) -> bool:
        if block in self.l3_inflight:
            return True
        return any(block in m for m in self.mshr)

    def _consume_forced(self, victim: Slot) -> None:
        if victim.owners & (1 << 30):
            victim.owners &= ~(1 << 30)
            self.stat["forced_evictions"] += 1

    def _evict_l1(self, core: int, victim: Slot, now: int) -> None:
        self._consume_forced(victim)
        if self.sp is not None and victim.sht_index >= 0:
            set_key = self.l1[core].set_index(victim.block)
            self.sp[core].train(victim.sht_index, victim.used, now, set_key)
        if victim.dirty:
            slot2 = self.l2[core].find(victim.block)
            assert slot2 is not None, "dirty L1 line missing from L2"
            slot2.dirty |= victim.dirty

    def _back_invalidate_l1(self, core: int, block: int, now: int) -> int:
        l1 = self.l1[core]
        slot = l1.find(block)
        if slot is None:
            return 0
        l1.sets[l1.set_index(block)].remove(slot)
        if self.sp is not None and slot.sht_index >= 0:
            self.sp[core].train(slot.sht_index, slot.used, now, l1.set_index(block))
        return slot.dirty

    def _evict_l2(self, core: int, victim: Slot, now: int, mem_cycle: int) -> None:
        self._consume_forced(victim)
        dirty = victim.dirty | self._back_invalidate_l1(core, victim.block, now)
        if dirty:
            slot3 = self.l3.find(victim.block)
            assert slot3 is not None, "dirty L2 line missing from L3"
            slot3.dirty |= dirty

    def _evict_l3(self, victim: Slot, now: int, mem_cycle: int) -> None:
        self._consume_forced(victim)
        if victim.prefetched:
            self.stat["pf_useless"] += 1
        dirty = victim.dirty
        owners = victim.owners
        for core in range(self.cfg.cores):
            if owners >> core & 1:
                l2 = self.l2[core]
                slot2 = l2.find(victim.block)
                dirty |= self._back_invalidate_l1(core, victim.block, now)
                if slot2 is not None:
                    dirty |= slot2.dirty
                    l2.sets[l2.set_index(victim.block)].remove(slot2)
        if dirty:
            mask = dirty & FULL_MASK
            coords, _ = self.geom.decompose(victim.block << 6)
            req = MemoryRequest(Kind.WRITE, coords, mask, victim.block,
                                enqueue_cycle=mem_cycle, writeback=True)
            self.mem.submit_write(req)
            self.stat["writebacks"] += 1
            self.stat["writeback_sectors"] += popcount(mask)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)
