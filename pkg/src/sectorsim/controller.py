"""Per-channel memory controller: request queues, scheduling, completions.

Scheduling is first-ready-first-come-first-served with a row-hit cap, one
command per cycle. Each decision evaluates the oldest candidate per bank
in three classes and issues the oldest command whose timing is satisfied:

  1. column commands for row-hit-ready entries (mask covered by the open
     row's mask), skipping banks whose consecutive-hit streak reached the
     cap so misses cannot starve behind an endless hit stream;
  2. preparation for each bank's oldest queued entry: an ACT once the
     latched sector bits cover everything queued for that row, otherwise a
     sector-latch PRE carrying that union; hits demoted by the cap also
     surface here in plain age order;
  3. a real precharge for an open row that serves no queued hit, carrying
     the union mask of the next row's requesters. Banks with a live
     (uncapped) row hit pending are never precharged out from under it.

Outside write-drain the classes run over reads first and writes are only
prepared when the read queue is empty; a high/low watermark on the write
queue flips drain mode, during which the same classes run writes-first.

Queues are mirrored into per-bank deques (age order) and the per-bank
candidates of each class are kept up to date incrementally (they only
change when a command issues or an entry joins or leaves a bank), so a
decision walks a few live candidates in age order instead of the whole
queue. Wake-up hints may be early when a shared resource such as the data
bus blocks a whole class, never late: an early step observes no ready
command and changes nothing.
"""

import heapq
from collections import deque

from .dram import DramDevice
from .types import FULL_MASK, Kind, MemoryRequest

_INF = float("inf")
_BIG = 1 << 62


class _QEntry:
    __slots__ = ("req", "mask", "seq", "rank", "bank", "key", "row",
                 "is_write", "age0")

    def __init__(self, req: MemoryRequest, mask: int, seq: int, now: int):
        self.req = req
        self.mask = mask
        self.seq = seq
        self.rank = req.coords.rank
        self.bank = req.coords.bank
        self.key = (self.rank << 6) | self.bank
        self.row = req.coords.row
        self.is_write = req.kind is Kind.WRITE
        self.age0 = now


class MemoryController:
    """Owns one channel's DRAM device and its read/write scheduling."""

    def __init__(self, cfg, channel: int, log_fn=None):
        self.cfg = cfg
        self.channel = channel
        self.dev = DramDevice(cfg, channel, log_fn=log_fn)
        assert cfg.banks <= 64 and cfg.ranks <= 64
        self.now = 0
        self._last_step = -1
        self.read_q: list[_QEntry] = []
        self.write_q: list[_QEntry] = []
        # per-bank mirrors of the queues, key = rank << 6 | bank
        self.bk_r: dict[int, deque] = {}
        self.bk_w: dict[int, deque] = {}
        # live candidates, maintained by _refresh on every queue/bank event:
        # _c1[key] = (oldest covered read, oldest covered write) of an open
        # uncapped bank; _c2[key] = (kind, entry) for the first queue's
        # oldest entry. _c1 membership doubles as the claim set that shields
        # banks with a live row hit from class-3 precharges.
        self._c1: dict[int, tuple] = {}
        self._c2: dict[int, tuple] = {}
        # submitted but not yet admitted requests, keyed by arrival cycle
        self.pending_r: list[tuple[int, int, MemoryRequest]] = []
        self.pending_w: list[tuple[int, int, MemoryRequest]] = []
        self._submit_seq = 0
        self._adm_seq = 0
        self.pf_drop_cb = None   # told about prefetches discarded on admission
        self._completions: list[tuple[int, int, MemoryRequest]] = []
        self._counts: dict[tuple[int, int, int], int] = {}
        self.drain = False
        self._hint = _INF
        self._issued = False
        # dynamic sector gate; fixed modes pin it at construction
        self.gated = cfg.mode_enum.gated
        self.sector_on = cfg.mode_enum.sectored and not self.gated
        if self.gated and cfg.act_budget == "auto":
            self.dev.baseline_budget = True  # gate starts off
        self._win_start = 0
        self._win_integral = 0
        self._last_occ_t = 0
        self.stat_windows = 0
        self.stat_windows_on = 0
        self.stat_cols = 0
        self.stat_col_hits = 0
        self.stat_reads_done = 0
        self.stat_writes_done = 0
        self.stat_pf_dropped = 0
        self.stat_occ_total = 0
        self.stat_lat_sum = 0
        self.stat_lat_n = 0
        self.stat_stall_faw = 0
        self.occ_hist_r: dict[int, int] = {}
        self.occ_hist_w: dict[int, int] = {}

    # ------------------------------------------------------------ submission

    def submit_read(self, req: MemoryRequest) -> None:
        heapq.heappush(
            self.pending_r, (req.enqueue_cycle, self._next_submit(), req)
        )

    def submit_write(self, req: MemoryRequest) -> None:
        heapq.heappush(
            self.pending_w, (req.enqueue_cycle, self._next_submit(), req)
        )

    def _next_submit(self) -> int:
        self._submit_seq += 1
        return self._submit_seq

    def busy(self) -> bool:
        return bool(
            self.read_q
            or self.write_q
            or self.pending_r
            or self.pending_w
            or self._completions
        )

    # ----------------------------------------------------------- gate window

    def _advance_gate(self, t: int) -> None:
        """Accumulate queue occupancy and apply gate window decisions."""
        if t <= self._last_occ_t:
            return
        occ = len(self.read_q)
        occ_w = len(self.write_q)
        self.occ_hist_r[occ] = self.occ_hist_r.get(occ, 0) + (t - self._last_occ_t)
        self.occ_hist_w[occ_w] = self.occ_hist_w.get(occ_w, 0) + (t - self._last_occ_t)
        if not self.gated:
            self.stat_occ_total += occ * (t - self._last_occ_t)
            self._last_occ_t = t
            return
        win = self.cfg.gate_window
        while t - self._win_start >= win:
            edge = self._win_start + win
            span = edge - self._last_occ_t
            self._win_integral += occ * span
            self.stat_occ_total += occ * span
            self._last_occ_t = edge
            self.stat_windows += 1
            self.sector_on = self._win_integral > self.cfg.gate_threshold * win
            if self.sector_on:
                self.stat_windows_on += 1
            if self.cfg.act_budget == "auto":
                self.dev.baseline_budget = not self.sector_on
            self._win_integral = 0
            self._win_start = edge
        self._win_integral += occ * (t - self._last_occ_t)
        self.stat_occ_total += occ * (t - self._last_occ_t)
        self._last_occ_t = t

    # ------------------------------------------------------------- admission

    def _admit(self, now: int) -> None:
        while self.pending_r and self.pending_r[0][0] <= now:
            if len(self.read_q) < self.cfg.read_queue:
                _, _, req = heapq.heappop(self.pending_r)
                self._push(self.read_q, req, now)
            elif self.pending_r[0][2].prefetch:
                _, _, req = heapq.heappop(self.pending_r)
                self.stat_pf_dropped += 1
                if self.pf_drop_cb is not None:
                    self.pf_drop_cb(req)
            else:
                break
        while (
            self.pending_w
            and self.pending_w[0][0] <= now
            and len(self.write_q) < self.cfg.write_queue
        ):
            _, _, req = heapq.heappop(self.pending_w)
            self._push(self.write_q, req, now)
        was = self.drain
        if len(self.write_q) >= self.cfg.drain_high:
            self.drain = True
        elif self.drain and len(self.write_q) <= self.cfg.drain_low:
            self.drain = False
        if self.drain != was:
            # the leading queue changed, so every class-2 candidate did too
            self._c2.clear()
            for key in (self.bk_w if self.drain else self.bk_r):
                self._refresh(key)

    def _push(self, q: list, req: MemoryRequest, now: int) -> None:
        if not self.sector_on:
            req.mask = FULL_MASK  # widened fetch: the fill gets it all too
        self._adm_seq += 1
        e = _QEntry(req, req.mask, self._adm_seq, now)
        q.append(e)
        bk = self.bk_w if e.is_write else self.bk_r
        dq = bk.get(e.key)
        if dq is None:
            bk[e.key] = deque((e,))
        else:
            dq.append(e)
        key = (e.rank, e.bank, e.row)
        self._counts[key] = self._counts.get(key, 0) + 1
        self._refresh(e.key)

    def _unlink(self, e: _QEntry) -> None:
        bk = self.bk_w if e.is_write else self.bk_r
        dq = bk[e.key]
        dq.remove(e)
        if not dq:
            del bk[e.key]

    def _union_needed(self, rank: int, bank: int, row: int) -> int:
        mask = 0
        key = (rank << 6) | bank
        for bk in (self.bk_r, self.bk_w):
            dq = bk.get(key)
            if dq is not None:
                for e in dq:
                    if e.row == row:
                        mask |= e.mask
        return mask

    # ------------------------------------------------------------ scheduling

    def _refresh(self, key: int) -> None:
        """Recompute both classes' candidates for one bank.

        Called after any event that can change them: an entry joined or
        left the bank, or a command touched it. Everything else the
        scheduler reads per decision is live device timing state.
        """
        b = self.dev.banks[key >> 6][key & 63]
        if b.open and b.streak < self.cfg.frfcfs_cap:
            row = b.row
            omask = b.open_mask
            rep_r = None
            dq = self.bk_r.get(key)
            if dq is not None:
                for e in dq:
                    if e.row == row and not (e.mask & ~omask):
                        rep_r = e
                        break
            rep_w = None
            dq = self.bk_w.get(key)
            if dq is not None:
                for e in dq:
                    if e.row == row and not (e.mask & ~omask):
                        rep_w = e
                        break
            if rep_r is None and rep_w is None:
                self._c1.pop(key, None)
            else:
                self._c1[key] = (rep_r, rep_w)
        else:
            self._c1.pop(key, None)
        dq = (self.bk_w if self.drain else self.bk_r).get(key)
        if dq is None:
            self._c2.pop(key, None)
            return
        e = dq[0]
        if b.open:
            if b.row == e.row and not (e.mask & ~b.open_mask):
                if b.streak < self.cfg.frfcfs_cap:
                    self._c2.pop(key, None)  # class-1 territory
                else:
                    self._c2[key] = ("col", e)
            else:
                self._c2[key] = ("pre", e)
            return
        if self._union_needed(e.rank, e.bank, e.row) != b.pending_mask:
            # the activation must open exactly what is queued for the
            # row, so any stale latch is rewritten first; a latch is
            # always issuable on a closed bank
            self._c2[key] = ("latch", e)
        else:
            self._c2[key] = ("act", e)

    def _hits(self, now: int):
        """Oldest row-hit column issuable at `now` across both queues.

        Per open bank the oldest covered entry of each queue stands for the
        rest (column readiness is a bank property, so age decides). When
        the data bus blocks a whole direction the candidates are skipped
        wholesale and the bus floor feeds the wake-up hint; it is never
        later than any skipped candidate's own time. Future hit times feed
        the hint too.
        """
        c1 = self._c1
        if not c1:
            return None
        dev = self.dev
        tm = dev.t
        bus_r = dev.bus_free + (1 if dev.bus_dir == "W" else 0) - tm.cl
        bus_w = dev.bus_free + (1 if dev.bus_dir == "R" else 0) - tm.tcwl
        skip_r = bus_r > now
        skip_w = bus_w > now
        hint = self._hint
        have_r = have_w = False
        cands = []
        for reps in c1.values():
            e = reps[0]
            if e is not None:
                have_r = True
                if not skip_r:
                    cands.append((e.seq, e))
            e = reps[1]
            if e is not None:
                have_w = True
                if not skip_w:
                    cands.append((e.seq, e))
        if skip_r and have_r and bus_r < hint:
            hint = bus_r
        if skip_w and have_w and bus_w < hint:
            hint = bus_w
        best = None
        if cands:
            cands.sort()
            banks = dev.banks
            ranks = dev.ranks
            ccd_l = tm.tccd_l
            ccd_s = tm.tccd_s
            for _, e in cands:
                bank = e.bank
                b = banks[e.rank][bank]
                rk = ranks[e.rank]
                g = bank & 3
                if e.is_write:
                    t = b.wr_ok
                    if bus_w > t:
                        t = bus_w
                else:
                    t = b.rd_ok
                    x = rk.rd_after_wr[g]
                    if x > t:
                        t = x
                    if bus_r > t:
                        t = bus_r
                x = rk.last_col_group[g] + ccd_l
                if x > t:
                    t = x
                x = rk.last_col_any + ccd_s
                if x > t:
                    t = x
                if t <= now:
                    best = e
                    break
                if t < hint:
                    hint = t
        self._hint = hint
        return best

    def _fast_preps(self, now: int):
        """Oldest issuable preparation among the live class-2 candidates.

        Latches are always issuable; activations use a cheap lower bound
        (every term but the budget) and only consult the budget when that
        clears, so a blocked bank costs a few comparisons. The lower bound
        also feeds the hint, early but never late.
        """
        dev = self.dev
        tm = dev.t
        banks = dev.banks
        ranks = dev.ranks
        hint = self._hint
        bus_r = dev.bus_free + (1 if dev.bus_dir == "W" else 0) - tm.cl
        bus_w = dev.bus_free + (1 if dev.bus_dir == "R" else 0) - tm.tcwl
        cands = [(e.seq, kind, e) for kind, e in self._c2.values()]
        cands.sort()
        pre_e = None
        for _, kind, e in cands:
            if kind == "latch":
                self._hint = hint
                return ("latch", e)
            bank = e.bank
            b = banks[e.rank][bank]
            rk = ranks[e.rank]
            g = bank & 3
            if kind == "act":
                t = b.act_ok
                x = b.last_act + tm.trc
                if x > t:
                    t = x
                x = rk.last_act_group[g] + tm.trrd_l
                if x > t:
                    t = x
                x = rk.last_act_any + tm.trrd_s
                if x > t:
                    t = x
                if t <= now:
                    t = dev.earliest_act(e.rank, bank, now)
                    if t <= now:
                        self._hint = hint
                        return ("act", e)
                if t < hint:
                    hint = t
            elif kind == "col":
                if e.is_write:
                    t = b.wr_ok
                    if bus_w > t:
                        t = bus_w
                else:
                    t = b.rd_ok
                    x = rk.rd_after_wr[g]
                    if x > t:
                        t = x
                    if bus_r > t:
                        t = bus_r
                x = rk.last_col_group[g] + tm.tccd_l
                if x > t:
                    t = x
                x = rk.last_col_any + tm.tccd_s
                if x > t:
                    t = x
                if t <= now:
                    self._hint = hint
                    return ("col", e)
                if t < hint:
                    hint = t
            else:  # conflict precharge; live row hits shield their bank
                if e.key in self._c1:
                    continue
                t = b.pre_ok
                if t <= now:
                    if pre_e is None:
                        pre_e = e
                elif t < hint:
                    hint = t
        self._hint = hint
        if pre_e is not None:
            return ("pre", pre_e)
        return None

    def _preps(self, bkmap: dict, now: int):
        """Oldest issuable preparation command in one queue.

        Straightforward walk used for the trailing queue once the leading
        one is empty (its banks carry no live candidates). Per bank only
        the oldest entry is considered. Returns (kind, entry) where kind is
        "col" (cap-demoted hit), "act", "latch", or "pre"; preparation
        classes beat conflict precharges.
        """
        cap = self.cfg.frfcfs_cap
        dev = self.dev
        banks = dev.banks
        claims = self._c1
        hint = self._hint
        best = None
        best_seq = _BIG
        best_kind = None
        pre_e = None
        pre_seq = _BIG
        for key, dq in bkmap.items():
            e = dq[0]
            b = banks[key >> 6][key & 63]
            if b.open:
                if b.row == e.row and not (e.mask & ~b.open_mask):
                    if b.streak < cap:
                        continue  # class-1 territory
                    if e.is_write:
                        t = dev.earliest_write(e.rank, e.bank, now)
                    else:
                        t = dev.earliest_read(e.rank, e.bank, now)
                    if t <= now:
                        if e.seq < best_seq:
                            best, best_seq, best_kind = e, e.seq, "col"
                    elif t < hint:
                        hint = t
                elif key not in claims:
                    t = dev.earliest_pre(e.rank, e.bank, now)
                    if t <= now:
                        if e.seq < pre_seq:
                            pre_e, pre_seq = e, e.seq
                    elif t < hint:
                        hint = t
                continue
            needed = self._union_needed(e.rank, e.bank, e.row)
            if needed != b.pending_mask:
                # the activation must open exactly what is queued for the
                # row, so any stale latch is rewritten first; a latch is
                # always issuable on a closed bank
                if e.seq < best_seq:
                    best, best_seq, best_kind = e, e.seq, "latch"
                continue
            t = dev.earliest_act(e.rank, e.bank, now)
            if t <= now:
                if e.seq < best_seq:
                    best, best_seq, best_kind = e, e.seq, "act"
            elif t < hint:
                hint = t
        self._hint = hint
        if best is not None:
            return (best_kind, best)
        if pre_e is not None:
            return ("pre", pre_e)
        return None

    def _choose(self, now: int):
        """Best command issuable this cycle, or None. Refreshes the hint."""
        self._hint = _INF
        # row hits merge across both queues; age breaks ties
        hit = self._hits(now)
        if hit is not None:
            return ("col", hit)
        if self._c2:
            prep = self._fast_preps(now)
            if prep is not None:
                return prep
        # the other queue is only prepared once the leading one is empty
        if self.drain:
            first_q, bk2 = self.write_q, self.bk_r
        else:
            first_q, bk2 = self.read_q, self.bk_w
        if not first_q:
            return self._preps(bk2, now)
        return None

    def _issue(self, kind: str, e: _QEntry, now: int) -> None:
        dev = self.dev
        if kind in ("latch", "pre"):
            needed = self._union_needed(e.rank, e.bank, e.row)
            dev.issue_pre(e.rank, e.bank, needed, now)
            self._refresh(e.key)
            return
        if kind == "act":
            budgeted, unbudgeted = dev.earliest_act_parts(e.rank, e.bank, 0)
            self.stat_stall_faw += budgeted - unbudgeted
            dev.issue_act(e.rank, e.bank, e.row, now)
            e.req.caused_act = True
            self._refresh(e.key)
            return
        # column command retires the entry
        key = (e.rank, e.bank, e.row)
        self._counts[key] -= 1
        auto = self._counts[key] == 0
        if auto:
            del self._counts[key]
        self.stat_cols += 1
        if not e.req.caused_act:
            self.stat_col_hits += 1
        self._unlink(e)
        if e.is_write:
            dev.issue_write(e.rank, e.bank, now, auto_pre=auto)
            self.write_q.remove(e)
            self.stat_writes_done += 1
        else:
            end = dev.issue_read(e.rank, e.bank, now, auto_pre=auto)
            self.read_q.remove(e)
            self.stat_reads_done += 1
            if not e.req.prefetch:
                self.stat_lat_sum += end - e.req.enqueue_cycle
                self.stat_lat_n += 1
            e.req.done = True
            e.req.done_cycle = end
            heapq.heappush(self._completions, (end, e.seq, e.req))
        self._refresh(e.key)

    def step(self, now: int) -> None:
        """Advance to cycle `now` and issue at most one command."""
        assert now > self._last_step
        self._last_step = now
        self.now = now
        self._advance_gate(now)
        self._admit(now)
        bound = self.cfg.starvation_bound
        if self.read_q and now - self.read_q[0].age0 > bound:
            raise RuntimeError(f"read starved beyond {bound} cycles")
        if self.write_q and now - self.write_q[0].age0 > bound:
            raise RuntimeError(f"write starved beyond {bound} cycles")
        choice = self._choose(now)
        if choice is not None:
            self._issue(choice[0], choice[1], now)
            self._issued = True
        else:
            self._issued = False

    def next_event(self, now: int) -> float:
        """Earliest future cycle at which this channel may act.

        Only meaningful right after step(now): the wake-up hint is the one
        that decision computed, or next cycle if a command went out.
        """
        assert self.now == now, "next_event without a step this cycle"
        best = _INF
        floor = now + 1
        if self._completions:
            best = min(best, max(floor, self._completions[0][0]))
        room_r = len(self.read_q) < self.cfg.read_queue
        if self.pending_r and (room_r or self.pending_r[0][2].prefetch):
            best = min(best, max(floor, self.pending_r[0][0]))
        if self.pending_w and len(self.write_q) < self.cfg.write_queue:
            best = min(best, max(floor, self.pending_w[0][0]))
        if self.read_q or self.write_q:
            if self._issued:
                best = floor
            else:
                best = min(best, max(floor, self._hint))
            if self.gated:
                best = min(best, max(floor, self._win_start + self.cfg.gate_window))
        return best

    def pop_completions(self, now: int):
        out = []
        while self._completions and self._completions[0][0] <= now:
            end, _, req = heapq.heappop(self._completions)
            out.append((req, end))
        return out

    def quiesce_cycle(self) -> int:
        """Cycle by which every issued command's effects have played out."""
        assert not self.busy()
        return max(self.now, self.dev.quiesce_cycle())

    def finish(self, end_cycle: int) -> None:
        """Close the books at end of run for background-energy accounting."""
        self._advance_gate(end_cycle)
        self.dev.flush_background(end_cycle)
