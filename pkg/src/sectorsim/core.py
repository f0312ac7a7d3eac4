"""In-order-retire core model driven by memory traces.

Each core owns a 128-entry instruction window fed from a trace file. A trace
entry contributes its bubble count first (plain 1-cycle instructions), then
the memory access itself. Loads queue in the load/store queue and dispatch to
the cache hierarchy one per cycle, oldest first. While an older same-block
load is still waiting to issue, a younger load donates its word bit to the
older entry's mask and never issues a request of its own; the merge scan
compares the new entry against up to `la_depth` queued entries. Stores
perform their cache write at retirement, inside the retire width, and do not
wait for it.

The driver owns the clock. It calls tick(now) with strictly increasing cpu
cycle numbers and may skip cycles the core declared uninteresting through
tick's return value (the next cycle worth visiting, or a huge sentinel when
the core can only be woken externally). Load completions arriving through
on_complete require the driver to re-tick the core at the completion cycle.
A dispatch or store blocked on a full MSHR can resume only after a cache
fill, so the driver must also re-tick a core whose `stalled` flag is set
whenever fills were applied.
"""

from collections import deque
from heapq import heappush, heappop

from .cache import HIT, STALL
from .config import SimConfig
from .types import Kind

NEVER = 1 << 62


class MemSlot:
    """One memory instruction occupying a window entry."""

    __slots__ = ("core", "kind", "pc", "block", "word", "mask", "fetch_cycle",
                 "dispatched", "subsumed", "done_cycle", "followers")

    def __init__(self, core: int, kind: Kind, pc: int, block: int, word: int,
                 fetch_cycle: int) -> None:
        self.core = core
        self.kind = kind
        self.pc = pc
        self.block = block
        self.word = word
        self.mask = 1 << word
        self.fetch_cycle = fetch_cycle
        self.dispatched = False
        self.subsumed = False
        self.done_cycle = None
        self.followers: list["MemSlot"] | None = None

    @property
    def addr(self) -> int:
        return (self.block << 6) | (self.word << 3)


class Core:
    """Trace-driven core: window, retire, LSQ merge, dispatch."""

    def __init__(self, cfg: SimConfig, core_id: int, hier, trace,
                 max_insts: int | None = None) -> None:
        self.cfg = cfg
        self.core_id = core_id
        self.hier = hier
        self._it = iter(trace)
        self._insts_left = max_insts  # None runs the trace to completion
        self._src_done = False
        self._bub = 0            # bubbles of the current entry not yet fetched
        self._pend = None        # the current entry's memory op, if unfetched

        # window items are MemSlots or [count, fetch_cycle] bubble runs,
        # in program order; lsq holds undispatched, unsubsumed loads
        self.window: deque = deque()
        self.occ = 0
        self.lsq: deque = deque()
        self._wake: list[int] = []   # known future completion cycles
        self._last_tick = -1
        self.stalled = False
        self.finish_cycle = None

        self.retired = 0
        self.fetched = 0
        self.n_loads = 0
        self.n_stores = 0
        self.n_dispatched = 0    # load requests handed to the hierarchy
        self.n_subsumed = 0
        self.n_stalls = 0

    # ------------------------------------------------------------- trace feed

    def _pull(self) -> bool:
        """Stage the next trace entry; False when the trace is exhausted."""
        if self._src_done:
            return False
        entry = next(self._it, None)
        if entry is None:
            self._src_done = True
            return False
        bub, mem = entry.bubbles, entry
        if self._insts_left is not None:
            if self._insts_left <= 0:
                self._src_done = True
                return False
            bub = min(bub, self._insts_left)
            self._insts_left -= bub
            if self._insts_left > 0:
                self._insts_left -= 1
            else:
                mem = None
                self._src_done = True
        self._bub = bub
        self._pend = mem
        return self._bub > 0 or self._pend is not None

    def _fetch(self, now: int) -> int:
        budget = min(self.cfg.fetch_width, self.cfg.window_entries - self.occ)
        got = 0
        while budget > 0:
            if self._bub > 0:
                k = min(budget, self._bub)
                self._bub -= k
                tail = self.window[-1] if self.window else None
                if type(tail) is list and tail[1] == now:
                    tail[0] += k
                else:
                    self.window.append([k, now])
                self.occ += k
                budget -= k
                got += k
            elif self._pend is not None:
                e = self._pend
                self._pend = None
                kind = Kind.WRITE if e.kind == "W" else Kind.READ
                slot = MemSlot(self.core_id, kind, e.pc, e.vaddr >> 6,
                               (e.vaddr >> 3) & 7, now)
                self.window.append(slot)
                self.occ += 1
                budget -= 1
                got += 1
                if kind is Kind.READ:
                    self.n_loads += 1
                    self._lsq_insert(slot)
                else:
                    self.n_stores += 1
            elif not self._pull():
                break
        self.fetched += got
        return got

    def _lsq_insert(self, slot: MemSlot) -> None:
        depth = self.cfg.eff_la_depth
        scanned = 0
        for old in reversed(self.lsq):
            if scanned >= depth:
                break
            scanned += 1
            if old.block == slot.block:
                old.mask |= slot.mask
                if old.followers is None:
                    old.followers = []
                old.followers.append(slot)
                slot.subsumed = True
                self.n_subsumed += 1
                return
        self.lsq.append(slot)

    # ---------------------------------------------------------------- retire

    def _retire(self, now: int) -> int:
        budget = self.cfg.retire_width
        done = 0
        while budget > 0 and self.window:
            head = self.window[0]
            if type(head) is list:
                if head[1] >= now:
                    break
                k = min(budget, head[0])
                head[0] -= k
                if head[0] == 0:
                    self.window.popleft()
                budget -= k
                done += k
                self.occ -= k
                continue
            if head.kind is Kind.WRITE and not head.dispatched:
                if head.fetch_cycle >= now:
                    break
                res = self.hier.access(self.core_id, None, Kind.WRITE,
                                       head.addr, head.mask, head.pc,
                                       head.word, now)
                if res[0] == STALL:
                    self.stalled = True
                    self.n_stalls += 1
                    break
                head.dispatched = True
                head.done_cycle = now
            if head.done_cycle is None or head.done_cycle > now:
                break
            self.window.popleft()
            budget -= 1
            done += 1
            self.occ -= 1
        self.retired += done
        return done

    # -------------------------------------------------------------- dispatch

    def _dispatch(self, now: int) -> bool:
        if not self.lsq:
            return False
        slot = self.lsq[0]
        if slot.fetch_cycle >= now:
            return False
        res = self.hier.access(self.core_id, slot, Kind.READ, slot.addr,
                               slot.mask, slot.pc, slot.word, now)
        if res[0] == STALL:
            self.stalled = True
            self.n_stalls += 1
            return False
        self.lsq.popleft()
        slot.dispatched = True
        self.n_dispatched += 1
        if res[0] == HIT:
            self._complete(slot, res[1])
            if res[1] > now:
                heappush(self._wake, res[1])
        return True

    def _complete(self, slot: MemSlot, done: int) -> None:
        slot.done_cycle = done
        if slot.followers:
            for f in slot.followers:
                f.done_cycle = done

    def on_complete(self, slot: MemSlot, done: int) -> None:
        """Completion callback for loads that went out as requests."""
        self._complete(slot, done)

    # ------------------------------------------------------------------ tick

    def tick(self, now: int) -> int:
        """Advance one cpu cycle; returns the next cycle worth ticking."""
        assert now > self._last_tick, "core ticked twice in one cycle"
        self._last_tick = now
        self.stalled = False
        while self._wake and self._wake[0] <= now:
            heappop(self._wake)

        changed = self._retire(now) > 0
        changed |= self._fetch(now) > 0
        changed |= self._dispatch(now)

        if self.done():
            if self.finish_cycle is None:
                self.finish_cycle = now
            return NEVER
        nxt = now + 1 if changed else NEVER
        if self._wake:
            nxt = min(nxt, self._wake[0])
        return nxt

    def done(self) -> bool:
        return self._src_done and not self.window and self._pend is None \
            and self._bub == 0

    # ----------------------------------------------------------------- stats

    @property
    def cycles(self) -> int:
        end = self.finish_cycle if self.finish_cycle is not None \
            else self._last_tick
        return end + 1

    def ipc(self) -> float:
        c = self.cycles
        return self.retired / c if c > 0 else 0.0
