"""DRAM and processor energy accounting.

Per-command array energy interpolates linearly between the one-sector and
eight-sector operation costs; the interpolation anchors are the measured
cost ratios r (one-sector cost relative to full cost). Activation energy
carries the sense-amplifier bookkeeping overhead and, by IDD0 convention,
already includes the paired precharge, so PREs add nothing on their own
and mask-only PREs in particular cost no array energy. Background power
is charged per rank by standby state: active while any bank holds an open
row, precharged otherwise.

Everything accumulates in picojoules (1 W x 1 ps = 1 pJ, so power in
watts times duration in picoseconds needs no conversion factor). Both
charging paths, the live device histograms and the command-log re-walk,
reduce to the same count-times-cost products in the same order, so their
ledgers match bit for bit, not just within tolerance.
"""

from dataclasses import dataclass

from .types import popcount


def scale(e8: float, r: float, s: int) -> float:
    """Energy of an s-sector operation given the full-block cost e8."""
    if not 1 <= s <= 8:
        raise ValueError(f"sector count {s} out of range")
    return e8 * (r + (1.0 - r) * (s - 1) / 7.0)


@dataclass
class EnergyLedger:
    """Accumulated energy in picojoules, plus the bus-byte counter."""

    e_act_pj: float = 0.0
    e_rdwr_pj: float = 0.0
    e_background_pj: float = 0.0
    e_processor_pj: float = 0.0
    bytes_on_bus: int = 0

    @property
    def dram_pj(self) -> float:
        return self.e_act_pj + self.e_rdwr_pj + self.e_background_pj

    @property
    def total_pj(self) -> float:
        return self.dram_pj + self.e_processor_pj

    def as_dict(self) -> dict:
        return {
            "act_pj": self.e_act_pj,
            "rdwr_pj": self.e_rdwr_pj,
            "background_pj": self.e_background_pj,
            "dram_pj": self.dram_pj,
            "processor_pj": self.e_processor_pj,
            "total_pj": self.total_pj,
            "bytes_on_bus": self.bytes_on_bus,
        }


class EnergyModel:
    def __init__(self, cfg):
        self.cfg = cfg

    # ------------------------------------------------------------- commands

    def act_pj(self, sectors: int) -> float:
        return scale(self.cfg.e_act8_pj, self.cfg.r_act, sectors) * self.cfg.sa_overhead

    def col_pj(self, write: bool, sectors: int) -> float:
        if write:
            return scale(self.cfg.e_wr8_pj, self.cfg.r_wr, sectors)
        return scale(self.cfg.e_rd8_pj, self.cfg.r_rd, sectors)

    def charge_hists(self, ledger: EnergyLedger, acts, rds, wrs) -> None:
        """Charge command histograms indexed by sector count (1..8)."""
        for s in range(1, 9):
            if acts[s]:
                ledger.e_act_pj += acts[s] * self.act_pj(s)
            if rds[s]:
                ledger.e_rdwr_pj += rds[s] * self.col_pj(False, s)
            if wrs[s]:
                ledger.e_rdwr_pj += wrs[s] * self.col_pj(True, s)
            ledger.bytes_on_bus += 8 * s * (rds[s] + wrs[s])

    def account_device(self, ledger: EnergyLedger, dev, end_cycle: int) -> None:
        """Charge everything one device did: commands and standby time."""
        self.charge_hists(ledger, dev.acts_hist, dev.rds_hist, dev.wrs_hist)
        tck_ps = self.cfg.timing.tck_ps
        for rk in dev.ranks:
            active = rk.active_cycles
            assert 0 <= active <= end_cycle
            ledger.e_background_pj += self._standby_pj(
                active, end_cycle - active, tck_ps
            )

    def _standby_pj(self, active_cycles: int, pre_cycles: int, tck_ps: int) -> float:
        act = self.cfg.p_bg_active_mw * 1e-3 * (active_cycles * tck_ps)
        pre = self.cfg.p_bg_precharged_mw * 1e-3 * (pre_cycles * tck_ps)
        return act + pre

    # ------------------------------------------------------------ processor

    def processor_watts(self, ipcs) -> float:
        """IPC-proportional dynamic power plus static, scaled by core count."""
        n = len(ipcs)
        if n == 0:
            return 0.0
        for v in ipcs:
            if not 0.0 <= v <= 4.0:
                raise ValueError(f"per-core IPC {v} out of [0, 4]")
        util = sum(ipcs) / (4.0 * n)
        full = util * self.cfg.proc_dyn_w + self.cfg.proc_static_w
        return full * (n / 8.0)

    def account_processor(self, ledger: EnergyLedger, ipcs, cycles: int) -> None:
        watts = self.processor_watts(ipcs)
        ledger.e_processor_pj += watts * (cycles * self.cfg.timing.tck_ps)

    # ------------------------------------------------------- log cross-check

    def walk_log(self, entries, end_cycle: int) -> EnergyLedger:
        """Rebuild one channel's DRAM ledger from raw command tuples.

        An independent accounting path over nothing but the emitted log,
        used to cross-check the live ledger. Auto-precharge close times
        and rank standby intervals are reconstructed from scratch.
        Entries are (cycle, cmd, rank, bank, row, mask) with row None or
        -1 for column commands.
        """
        t = self.cfg.timing
        n_ranks = self.cfg.ranks
        acts = [0] * 9
        rds = [0] * 9
        wrs = [0] * 9
        open_banks = [set() for _ in range(n_ranks)]
        act_time = {}
        active_since = [0] * n_ranks
        active_total = [0] * n_ranks
        closes: list[tuple[int, int, int]] = []
        closing: set = set()  # banks with a pending auto-precharge

        def close(rank, bank, when):
            bs = open_banks[rank]
            if bank in bs:
                bs.discard(bank)
                if not bs:
                    active_total[rank] += when - active_since[rank]

        def run_closes(upto):
            nonlocal closes
            left = []
            for (when, rank, bank) in sorted(closes):
                if when <= upto:
                    close(rank, bank, when)
                    closing.discard((rank, bank))
                else:
                    left.append((when, rank, bank))
            closes = left

        for (cycle, cmd, rank, bank, row, mask) in entries:
            run_closes(cycle)
            if cmd == "ACT":
                if not open_banks[rank]:
                    active_since[rank] = cycle
                open_banks[rank].add(bank)
                act_time[(rank, bank)] = cycle
                acts[popcount(mask)] += 1
            elif cmd == "PRE":
                # with an auto-precharge already in flight the bank counts
                # as closed and this PRE can only be a sector-bit latch
                if (rank, bank) not in closing:
                    close(rank, bank, cycle)
            elif cmd in ("RD", "RDA"):
                rds[popcount(mask)] += 1
                if cmd == "RDA":
                    pre_at = max(
                        act_time[(rank, bank)] + t.tras, cycle + t.trtp
                    )
                    closes.append((pre_at, rank, bank))
                    closing.add((rank, bank))
            elif cmd in ("WR", "WRA"):
                beats = popcount(mask)
                wrs[beats] += 1
                if cmd == "WRA":
                    data_end = cycle + t.tcwl + (beats + 1) // 2
                    pre_at = max(
                        act_time[(rank, bank)] + t.tras, data_end + t.twr
                    )
                    closes.append((pre_at, rank, bank))
                    closing.add((rank, bank))
            else:
                raise ValueError(f"unknown command {cmd!r}")
        run_closes(end_cycle)
        ledger = EnergyLedger()
        self.charge_hists(ledger, acts, rds, wrs)
        for rank in range(n_ranks):
            if open_banks[rank]:
                active_total[rank] += end_cycle - active_since[rank]
            ledger.e_background_pj += self._standby_pj(
                active_total[rank], end_cycle - active_total[rank], t.tck_ps
            )
        return ledger
