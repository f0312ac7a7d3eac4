"""DRAM device timing model: banks, ranks, and the shared data bus.

Sector masks ride on precharge commands: a PRE latches the mask that the
next ACT of that bank will open. PRE to an open bank is a real precharge;
PRE to a closed bank only settles the latch, but either way the next ACT
of that bank must wait tRP for the sector bits to propagate. A burst moves
one beat per open sector, so column commands occupy the data bus for
ceil(open_sectors / 2) controller cycles.

Activation budget: a rolling tFAW window caps either the number of ACTs
(full-row budget) or the total activated sectors (sectored budget).

All methods take and return controller cycles for this device's channel;
commands must be issued in nondecreasing cycle order.
"""
from __future__ import annotations

import heapq
from collections import deque

from .types import FULL_MASK, bank_group, popcount

_NEG = -(1 << 60)


class BankState:
    __slots__ = ("open", "row", "open_mask", "pending_mask", "act_ok",
                 "pre_ok", "rd_ok", "wr_ok", "last_act", "streak")

    def __init__(self) -> None:
        self.open = False
        self.row = -1
        self.open_mask = 0
        self.pending_mask = FULL_MASK
        self.act_ok = 0
        self.pre_ok = 0
        self.rd_ok = 0
        self.wr_ok = 0
        self.last_act = _NEG
        self.streak = 0


class RankState:
    __slots__ = ("act_events", "act_n", "act_secs", "last_act_group",
                 "last_act_any", "last_col_group", "last_col_any",
                 "rd_after_wr", "n_open", "last_t", "active_cycles")

    def __init__(self) -> None:
        self.act_events: deque[tuple[int, int]] = deque()  # (cycle, sectors)
        self.act_n = 0      # len(act_events), kept as running totals so the
        self.act_secs = 0   # budget probe is O(1) when the window has room
        self.last_act_group = [_NEG] * 4
        self.last_act_any = _NEG
        self.last_col_group = [_NEG] * 4
        self.last_col_any = _NEG
        self.rd_after_wr = [0] * 4  # earliest RD per bank group after writes
        self.n_open = 0
        self.last_t = 0
        self.active_cycles = 0

    def advance(self, t: int) -> None:
        if t > self.last_t:
            if self.n_open > 0:
                self.active_cycles += t - self.last_t
            self.last_t = t


class DramDevice:
    def __init__(self, cfg, channel: int, log_fn=None) -> None:
        self.cfg = cfg
        self.t = cfg.timing
        self.channel = channel
        self.log_fn = log_fn
        self.banks = [[BankState() for _ in range(cfg.banks)]
                      for _ in range(cfg.ranks)]
        self.ranks = [RankState() for _ in range(cfg.ranks)]
        self.baseline_budget = cfg.baseline_budget
        self._closes: list[tuple[int, int]] = []  # (cycle, rank) auto-pre ends
        self.bus_free = 0
        self.bus_dir = ""  # "R" or "W" of the last burst
        self.last_cmd_cycle = _NEG

        self.acts_hist = [0] * 9
        self.rds_hist = [0] * 9
        self.wrs_hist = [0] * 9
        self.pre_real = 0
        self.pre_latch = 0
        self.bytes_on_bus = 0

    # ----------------------------------------------------------- budget gates

    def _budget(self, rk: RankState, sectors: int, now: int) -> int:
        """Earliest cycle the rank's activation budget admits `sectors`.

        Pure query: history is only pruned on issue (a probe's horizon may
        lie ahead of another bank's, so pruning here would lose live
        events). The running totals give an O(1) answer whenever the whole
        retained window already fits.
        """
        baseline = self.baseline_budget
        if baseline:
            weight, cap, total = 1, self.cfg.faw_acts, rk.act_n
        else:
            weight, cap, total = sectors, self.cfg.faw_sectors, rk.act_secs
        assert weight <= cap, "single activation exceeds the budget"
        if total + weight <= cap:
            return now
        tfaw = self.t.tfaw
        t = now
        for c, w in rk.act_events:
            if c + tfaw <= t:
                total -= 1 if baseline else w
                continue
            if total + weight <= cap:
                break
            total -= 1 if baseline else w
            t = c + tfaw
        return t

    def _expire_acts(self, rk: RankState, t: int) -> None:
        ev = rk.act_events
        tfaw = self.t.tfaw
        while ev and ev[0][0] + tfaw <= t:
            _, w = ev.popleft()
            rk.act_n -= 1
            rk.act_secs -= w

    # ------------------------------------------------------ earliest queries

    def earliest_act_parts(self, rank: int, bank: int, now: int) -> tuple[int, int]:
        """(earliest legal ACT, same ignoring the activation budget)."""
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert not b.open, "ACT to an open bank"
        g = bank_group(bank)
        t = max(now, b.act_ok, b.last_act + self.t.trc,
                rk.last_act_group[g] + self.t.trrd_l,
                rk.last_act_any + self.t.trrd_s)
        return self._budget(rk, popcount(b.pending_mask), t), t

    def earliest_act(self, rank: int, bank: int, now: int) -> int:
        return self.earliest_act_parts(rank, bank, now)[0]

    def earliest_read(self, rank: int, bank: int, now: int) -> int:
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert b.open, "RD to a closed bank"
        g = bank_group(bank)
        t = max(now, b.rd_ok,
                rk.last_col_group[g] + self.t.tccd_l,
                rk.last_col_any + self.t.tccd_s,
                rk.rd_after_wr[g])
        # data bus: burst starts CL after issue
        gap = 1 if self.bus_dir == "W" else 0
        t = max(t, self.bus_free + gap - self.t.cl)
        return t

    def earliest_write(self, rank: int, bank: int, now: int) -> int:
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert b.open, "WR to a closed bank"
        g = bank_group(bank)
        t = max(now, b.wr_ok,
                rk.last_col_group[g] + self.t.tccd_l,
                rk.last_col_any + self.t.tccd_s)
        gap = 1 if self.bus_dir == "R" else 0
        t = max(t, self.bus_free + gap - self.t.tcwl)
        return t

    def earliest_pre(self, rank: int, bank: int, now: int) -> int:
        b = self.banks[rank][bank]
        assert b.open, "real PRE needs an open row"
        return max(now, b.pre_ok)

    # --------------------------------------------------------------- issuing

    def _log(self, cycle: int, cmd: str, rank: int, bank: int, row, mask: int):
        assert cycle > self.last_cmd_cycle, "command bus conflict"
        self.last_cmd_cycle = cycle
        if self.log_fn is not None:
            self.log_fn(cycle, cmd, rank, bank, row, mask)

    def _advance_background(self, t: int) -> None:
        while self._closes and self._closes[0][0] <= t:
            c, r = heapq.heappop(self._closes)
            rk = self.ranks[r]
            rk.advance(c)
            rk.n_open -= 1

    def issue_pre(self, rank: int, bank: int, mask: int, t: int) -> bool:
        """Precharge carrying the next activation's sector mask.

        Returns True for a real precharge, False for a latch-only settle.
        """
        self._advance_background(t)
        b = self.banks[rank][bank]
        b.pending_mask = mask
        if b.open:
            assert t >= b.pre_ok, "PRE before the row may close"
            rk = self.ranks[rank]
            rk.advance(t)
            rk.n_open -= 1
            b.open = False
            b.open_mask = 0
            b.act_ok = max(b.act_ok, t + self.t.trp)
            self.pre_real += 1
            self._log(t, "PRE", rank, bank, None, mask)
            return True
        b.act_ok = max(b.act_ok, t + self.t.trp)
        self.pre_latch += 1
        self._log(t, "PRE", rank, bank, None, mask)
        return False

    def issue_act(self, rank: int, bank: int, row: int, t: int) -> int:
        """Open `row`; the latched mask becomes the open sector mask."""
        self._advance_background(t)
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert t >= self.earliest_act(rank, bank, t), "ACT too early"
        sectors = popcount(b.pending_mask)
        self._expire_acts(rk, t)
        rk.act_events.append((t, sectors))
        rk.act_n += 1
        rk.act_secs += sectors
        g = bank_group(bank)
        rk.last_act_group[g] = t
        rk.last_act_any = t
        rk.advance(t)
        rk.n_open += 1
        b.open = True
        b.row = row
        b.open_mask = b.pending_mask
        b.last_act = t
        b.rd_ok = t + self.t.trcd
        b.wr_ok = t + self.t.trcd
        b.pre_ok = t + self.t.tras
        b.streak = 0
        self.acts_hist[sectors] += 1
        self._log(t, "ACT", rank, bank, row, b.open_mask)
        return sectors

    def _burst_cycles(self, mask: int) -> int:
        return -(-popcount(mask) // 2)

    def issue_read(self, rank: int, bank: int, t: int, auto_pre: bool) -> int:
        """Returns the cycle the read data finishes on the bus."""
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert t >= self.earliest_read(rank, bank, t), "RD too early"
        omask = b.open_mask
        beats = popcount(omask)
        start = t + self.t.cl
        end = start + self._burst_cycles(omask)
        self._advance_background(t)
        g = bank_group(bank)
        rk.last_col_group[g] = t
        rk.last_col_any = t
        self.bus_free = end
        self.bus_dir = "R"
        b.pre_ok = max(b.pre_ok, t + self.t.trtp)
        b.streak += 1
        self.rds_hist[beats] += 1
        self.bytes_on_bus += 8 * beats
        if auto_pre:
            pre_start = max(b.last_act + self.t.tras, t + self.t.trtp)
            self._close_via_auto_pre(rank, b, pre_start)
            self._log(t, "RDA", rank, bank, None, omask)
        else:
            self._log(t, "RD", rank, bank, None, omask)
        return end

    def issue_write(self, rank: int, bank: int, t: int, auto_pre: bool) -> int:
        """Returns the cycle the write data finishes on the bus."""
        b = self.banks[rank][bank]
        rk = self.ranks[rank]
        assert t >= self.earliest_write(rank, bank, t), "WR too early"
        omask = b.open_mask
        beats = popcount(omask)
        start = t + self.t.tcwl
        end = start + self._burst_cycles(omask)
        self._advance_background(t)
        g = bank_group(bank)
        rk.last_col_group[g] = t
        rk.last_col_any = t
        for gg in range(4):
            gap = self.t.twtr_l if gg == g else self.t.twtr_s
            rk.rd_after_wr[gg] = max(rk.rd_after_wr[gg], end + gap)
        self.bus_free = end
        self.bus_dir = "W"
        b.pre_ok = max(b.pre_ok, end + self.t.twr)
        b.streak += 1
        self.wrs_hist[beats] += 1
        self.bytes_on_bus += 8 * beats
        if auto_pre:
            pre_start = max(b.last_act + self.t.tras, end + self.t.twr)
            self._close_via_auto_pre(rank, b, pre_start)
            self._log(t, "WRA", rank, bank, None, omask)
        else:
            self._log(t, "WR", rank, bank, None, omask)
        return end

    def _close_via_auto_pre(self, rank: int, b: BankState, pre_start: int) -> None:
        b.open = False
        b.open_mask = 0
        b.act_ok = max(b.act_ok, pre_start + self.t.trp)
        heapq.heappush(self._closes, (pre_start, rank))

    def quiesce_cycle(self) -> int:
        """Cycle by which in-flight bursts and scheduled row closes are done."""
        end = max(self.last_cmd_cycle, self.bus_free)
        if self._closes:
            end = max(end, max(c for c, _ in self._closes))
        return end

    def flush_background(self, end_cycle: int) -> None:
        self._advance_background(end_cycle)
        for rk in self.ranks:
            rk.advance(end_cycle)
