"""Independent command-stream auditor.

Re-checks a DRAM command sequence (one channel) against every timing
constraint, the activation budget, and data-bus occupancy, without sharing
any state with the device model that produced it. Used on every simulation
run and exposed through the CLI for checking written command logs.

Log line format: `<time-ps> <cmd> <rank> <bank> <row|-> <mask-hex>`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .types import FULL_MASK, bank_group, popcount

CMDS = ("ACT", "PRE", "RD", "WR", "RDA", "WRA")


@dataclass
class _Bank:
    open: bool = False
    row: int = -1
    open_mask: int = 0
    pending: int = FULL_MASK
    t_act: int = -(1 << 50)          # last ACT
    t_latch_ready: int = 0           # earliest ACT after latch-only PRE
    t_pre_done: int = 0              # earliest ACT after a precharge
    t_rd: int = -(1 << 50)           # last RD/RDA issue
    wr_data_end: int = -(1 << 50)    # last WR/WRA data end


@dataclass
class _Rank:
    acts: deque = field(default_factory=deque)  # (cycle, sectors)
    col_by_group: list = field(default_factory=lambda: [-(1 << 50)] * 4)
    col_any: int = -(1 << 50)
    act_by_group: list = field(default_factory=lambda: [-(1 << 50)] * 4)
    act_any: int = -(1 << 50)
    wr_end_by_group: list = field(default_factory=lambda: [-(1 << 50)] * 4)
    wr_end_any: int = -(1 << 50)
    max_acts_window: int = 0
    max_sectors_window: int = 0


class CommandAuditor:
    """Streaming legality checker for one channel's command sequence."""

    def __init__(self, cfg, baseline_budget: bool | None = None) -> None:
        self.cfg = cfg
        self.t = cfg.timing
        self.fixed_budget = baseline_budget
        self.banks = [[_Bank() for _ in range(cfg.banks)] for _ in range(cfg.ranks)]
        self.ranks = [_Rank() for _ in range(cfg.ranks)]
        self.violations: list[str] = []
        self.last_cycle = -1
        self.bus: list[tuple[int, int, str]] = []  # kept sorted, pruned
        self.n_cmds = 0

    # ------------------------------------------------------------- reporting

    def _flag(self, cycle: int, msg: str) -> None:
        self.violations.append(f"cycle {cycle}: {msg}")

    @property
    def ok(self) -> bool:
        return not self.violations

    def window_stats(self) -> dict:
        return {
            "max_acts_in_window": max((r.max_acts_window for r in self.ranks),
                                      default=0),
            "max_sectors_in_window": max((r.max_sectors_window for r in self.ranks),
                                         default=0),
        }

    # ------------------------------------------------------------ log lines

    def feed_line(self, line: str, lineno: int = 0) -> None:
        text = line.split("#", 1)[0].strip()
        if not text:
            return
        parts = text.split()
        if len(parts) != 6:
            self._flag(-1, f"line {lineno}: expected 6 fields, got {line!r}")
            return
        ps, cmd, rank, bank, row, mask = parts
        try:
            ps_i = int(ps)
            rank_i = int(rank)
            bank_i = int(bank)
            row_i = -1 if row == "-" else int(row)
            mask_i = int(mask, 16)
        except ValueError:
            self._flag(-1, f"line {lineno}: bad number in {line!r}")
            return
        if ps_i % self.t.tck_ps:
            self._flag(-1, f"line {lineno}: time {ps_i} ps is not a whole cycle")
            return
        self.feed(ps_i // self.t.tck_ps, cmd, rank_i, bank_i, row_i, mask_i)

    # ------------------------------------------------------------- commands

    def feed(self, cycle: int, cmd: str, rank: int, bank: int, row: int,
             mask: int) -> None:
        self.n_cmds += 1
        if cycle <= self.last_cycle:
            self._flag(cycle, f"command time not strictly increasing "
                              f"(previous {self.last_cycle})")
        self.last_cycle = cycle
        if cmd not in CMDS:
            self._flag(cycle, f"unknown command {cmd!r}")
            return
        if not (0 <= rank < self.cfg.ranks and 0 <= bank < self.cfg.banks):
            self._flag(cycle, f"rank/bank out of range: {rank}/{bank}")
            return
        if not 0 <= mask <= FULL_MASK:
            self._flag(cycle, f"mask out of range: {mask:#x}")
            return

        b = self.banks[rank][bank]
        r = self.ranks[rank]
        if cmd == "ACT":
            self._check_act(cycle, rank, bank, row, mask, b, r)
        elif cmd == "PRE":
            self._check_pre(cycle, rank, bank, mask, b)
        elif cmd in ("RD", "RDA"):
            self._check_col(cycle, rank, bank, mask, b, r, is_read=True,
                            auto=cmd == "RDA")
        else:
            self._check_col(cycle, rank, bank, mask, b, r, is_read=False,
                            auto=cmd == "WRA")

    def _check_act(self, cycle, rank, bank, row, mask, b, r) -> None:
        t = self.t
        if b.open:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: bank already open")
        if row < 0 or row >= self.cfg.rows:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: bad row {row}")
        if mask != b.pending:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: mask {mask:02x} "
                              f"differs from latched {b.pending:02x}")
        if cycle < b.t_act + t.trc:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: tRC violated")
        if cycle < b.t_pre_done:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: tRP not elapsed")
        if cycle < b.t_latch_ready:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: sector latch not settled")
        g = bank_group(bank)
        if cycle < r.act_by_group[g] + t.trrd_l:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: tRRD_L violated")
        if cycle < r.act_any + t.trrd_s:
            self._flag(cycle, f"ACT rank {rank} bank {bank}: tRRD_S violated")

        sectors = popcount(b.pending)
        while r.acts and r.acts[0][0] + t.tfaw <= cycle:
            r.acts.popleft()
        r.acts.append((cycle, sectors))
        n_acts = len(r.acts)
        n_sectors = sum(s for _, s in r.acts)
        r.max_acts_window = max(r.max_acts_window, n_acts)
        r.max_sectors_window = max(r.max_sectors_window, n_sectors)
        if self._baseline_budget():
            if n_acts > self.cfg.faw_acts:
                self._flag(cycle, f"rank {rank}: {n_acts} ACTs inside one tFAW window")
        elif n_sectors > self.cfg.faw_sectors:
            self._flag(cycle, f"rank {rank}: {n_sectors} sectors activated "
                              f"inside one tFAW window")

        r.act_by_group[g] = cycle
        r.act_any = cycle
        b.open = True
        b.row = row
        b.open_mask = b.pending
        b.t_act = cycle

    def _baseline_budget(self) -> bool:
        if self.fixed_budget is not None:
            return self.fixed_budget
        return self.cfg.baseline_budget

    def _pre_ready(self, b: _Bank) -> int:
        t = self.t
        return max(b.t_act + t.tras, b.t_rd + t.trtp, b.wr_data_end + t.twr)

    def _check_pre(self, cycle, rank, bank, mask, b) -> None:
        t = self.t
        if mask == 0:
            self._flag(cycle, f"PRE rank {rank} bank {bank}: empty sector mask")
        b.pending = mask
        if b.open:
            if cycle < self._pre_ready(b):
                self._flag(cycle, f"PRE rank {rank} bank {bank}: row closed too "
                                  f"early (ready {self._pre_ready(b)})")
            b.open = False
            b.open_mask = 0
            b.t_pre_done = cycle + t.trp
        else:
            b.t_latch_ready = cycle + t.trp

    def _check_col(self, cycle, rank, bank, mask, b, r, is_read, auto) -> None:
        t = self.t
        name = ("RDA" if auto else "RD") if is_read else ("WRA" if auto else "WR")
        if not b.open:
            self._flag(cycle, f"{name} rank {rank} bank {bank}: bank not open")
            return
        if cycle < b.t_act + t.trcd:
            self._flag(cycle, f"{name} rank {rank} bank {bank}: tRCD violated")
        if mask != b.open_mask:
            self._flag(cycle, f"{name} rank {rank} bank {bank}: logged mask "
                              f"{mask:02x} != open mask {b.open_mask:02x}")
        g = bank_group(bank)
        if cycle < r.col_by_group[g] + t.tccd_l:
            self._flag(cycle, f"{name} rank {rank} bank {bank}: tCCD_L violated")
        if cycle < r.col_any + t.tccd_s:
            self._flag(cycle, f"{name} rank {rank} bank {bank}: tCCD_S violated")
        if is_read:
            if cycle < r.wr_end_by_group[g] + t.twtr_l:
                self._flag(cycle, f"{name} rank {rank} bank {bank}: tWTR_L violated")
            if cycle < r.wr_end_any + t.twtr_s:
                self._flag(cycle, f"{name} rank {rank} bank {bank}: tWTR_S violated")

        beats = popcount(b.open_mask)
        dur = -(-beats // 2)
        start = cycle + (t.cl if is_read else t.tcwl)
        end = start + dur
        dirn = "R" if is_read else "W"
        for (s0, e0, d0) in self.bus:
            gap = 0 if d0 == dirn else 1
            if start < e0 + gap and s0 < end + gap:
                self._flag(cycle, f"{name} rank {rank} bank {bank}: data bus "
                                  f"conflict with burst [{s0},{e0}) {d0}")
        self.bus.append((start, end, dirn))
        if len(self.bus) > 64:
            horizon = min(s for s, _, _ in self.bus[-8:])
            self.bus = [x for x in self.bus if x[1] + 1 >= horizon - 200]

        r.col_by_group[g] = cycle
        r.col_any = cycle
        if is_read:
            b.t_rd = cycle
        else:
            b.wr_data_end = end
            r.wr_end_by_group[g] = end
            r.wr_end_any = end
        if auto:
            pre_start = (max(b.t_act + t.tras, cycle + t.trtp) if is_read
                         else max(b.t_act + t.tras, end + t.twr))
            b.open = False
            b.open_mask = 0
            b.t_pre_done = pre_start + t.trp


def audit_lines(cfg, lines, baseline_budget=None) -> CommandAuditor:
    a = CommandAuditor(cfg, baseline_budget)
    for i, line in enumerate(lines, 1):
        a.feed_line(line, i)
    return a
