"""Whole-system run driver.

Wires trace-driven cores, the shared cache hierarchy, and one memory
controller per channel into a single conservative event loop, then reduces
the run to a JSON-friendly report. Time is kept in scheduling units chosen
so that both clock domains land on integer boundaries (one cpu cycle is
`units_per_cpu` units, one controller cycle `units_per_mem`). Within one
point in time the phases are fixed: controllers step and deliver
completions, due cache fills are applied, cores tick. Every command issued
by any channel is also fed to an independent legality auditor; a run that
produced violations is not a valid run.
"""

from dataclasses import fields

from .audit import CommandAuditor
from .cache import Hierarchy, ceil_div
from .config import SimConfig
from .controller import MemoryController
from .core import Core, NEVER
from .energy import EnergyLedger, EnergyModel
from . import __version__

_INF_U = 1 << 62


class _Router:
    """Fans hierarchy requests out to per-channel controllers."""

    def __init__(self, ctrls):
        self.ctrls = ctrls
        self.touched = set()

    def submit_read(self, req):
        self.ctrls[req.coords.channel].submit_read(req)
        self.touched.add(req.coords.channel)

    def submit_write(self, req):
        self.ctrls[req.coords.channel].submit_write(req)
        self.touched.add(req.coords.channel)

    def submit_prefetch(self, req):
        # queued like a read; the controller may still drop it on admission
        self.ctrls[req.coords.channel].submit_read(req)
        self.touched.add(req.coords.channel)
        return True


class Simulation:
    def __init__(self, cfg: SimConfig, traces, log_fns=None,
                 record_fetch_masks: bool = False) -> None:
        if len(traces) != cfg.cores:
            raise ValueError(f"need {cfg.cores} traces, got {len(traces)}")
        self.cfg = cfg
        self.auditors = [CommandAuditor(cfg) for _ in range(cfg.channels)]
        self.ctrls = [
            MemoryController(cfg, ch, log_fn=self._mk_log(ch, log_fns))
            for ch in range(cfg.channels)
        ]
        self.router = _Router(self.ctrls)
        self.hier = Hierarchy(cfg, self.router, self._on_load_done)
        self.hier.record_fetch_masks = record_fetch_masks
        for ctrl in self.ctrls:
            ctrl.pf_drop_cb = self.hier.prefetch_dropped
        self.cores = [
            Core(cfg, i, self.hier, traces[i], max_insts=cfg.max_insts)
            for i in range(cfg.cores)
        ]
        self._core_wake = [0] * cfg.cores
        self._chan_wake = [_INF_U] * cfg.channels
        self.end_mem = 0

    def _mk_log(self, ch: int, log_fns):
        aud = self.auditors[ch]
        extra = log_fns[ch] if log_fns else None

        def fn(cycle, cmd, rank, bank, row, mask):
            aud.feed(cycle, cmd, rank, bank, row, mask)
            if extra is not None:
                extra(cycle, cmd, rank, bank, row, mask)

        return fn

    def _on_load_done(self, slot, done_cpu: int) -> None:
        self.cores[slot.core].on_complete(slot, done_cpu)
        w = done_cpu * self.cfg.units_per_cpu
        if w < self._core_wake[slot.core]:
            self._core_wake[slot.core] = w

    # ------------------------------------------------------------- main loop

    def run(self) -> None:
        cfg = self.cfg
        upc, upm = cfg.units_per_cpu, cfg.units_per_mem
        cores, ctrls, hier = self.cores, self.ctrls, self.hier
        core_wake, chan_wake = self._core_wake, self._chan_wake
        fills = hier._fills  # peeked every iteration; heapq keeps [0] minimal

        while True:
            t = min(core_wake)
            x = min(chan_wake)
            if x < t:
                t = x
            if fills:
                x = fills[0][0] * upc
                if x < t:
                    t = x
            if t >= _INF_U:
                break

            if t % upm == 0:
                m = t // upm
                for ch, ctrl in enumerate(ctrls):
                    if chan_wake[ch] <= t:
                        ctrl.step(m)
                        for req, m_done in ctrl.pop_completions(m):
                            hier.on_dram_fill(req, m_done)
                        nxt = ctrl.next_event(m)
                        chan_wake[ch] = (
                            _INF_U if nxt == float("inf") else int(nxt) * upm
                        )

            if t % upc == 0:
                c = t // upc
                for i in hier.run_fills_due(c):
                    if cores[i].stalled and core_wake[i] > t:
                        core_wake[i] = t
                self.router.touched.clear()
                for i, core in enumerate(cores):
                    if core_wake[i] <= t:
                        nxt = core.tick(c)
                        core_wake[i] = _INF_U if nxt >= NEVER else nxt * upc
                for ch in self.router.touched:
                    ctrl = ctrls[ch]
                    head = _INF_U
                    if ctrl.pending_r:
                        head = ctrl.pending_r[0][0]
                    if ctrl.pending_w:
                        head = min(head, ctrl.pending_w[0][0])
                    if head < _INF_U:
                        w = max(head, ctrl._last_step + 1) * upm
                        if w < chan_wake[ch]:
                            chan_wake[ch] = w

        stuck = [i for i, core in enumerate(cores) if not core.done()]
        assert not stuck, f"cores never finished: {stuck}"
        self.end_mem = max(ctrl.quiesce_cycle() for ctrl in ctrls)
        for ctrl in ctrls:
            ctrl.finish(self.end_mem)

    # -------------------------------------------------------------- reporting

    def report(self) -> dict:
        cfg = self.cfg
        em = EnergyModel(cfg)
        ledger = EnergyLedger()
        for ctrl in self.ctrls:
            em.account_device(ledger, ctrl.dev, self.end_mem)
        ipcs = [core.ipc() for core in self.cores]
        em.account_processor(ledger, ipcs, self.end_mem)

        core_rows = []
        for i, core in enumerate(self.cores):
            misses = self.hier.l3_misses_by_core[i]
            core_rows.append({
                "instructions": core.retired,
                "cycles": core.cycles,
                "ipc": core.ipc(),
                "loads": core.n_loads,
                "stores": core.n_stores,
                "requests_dispatched": core.n_dispatched,
                "merged_loads": core.n_subsumed,
                "llc_misses": misses,
                "mpki": 1000.0 * misses / core.retired if core.retired else 0.0,
            })

        dram_rows = []
        for ctrl in self.ctrls:
            dev = ctrl.dev
            cols = ctrl.stat_cols
            dram_rows.append({
                "reads": ctrl.stat_reads_done,
                "writes": ctrl.stat_writes_done,
                "columns": cols,
                "row_hit_rate": ctrl.stat_col_hits / cols if cols else 0.0,
                "avg_read_latency_mem_cycles":
                    ctrl.stat_lat_sum / ctrl.stat_lat_n if ctrl.stat_lat_n else 0.0,
                "acts_by_sectors": dev.acts_hist[1:],
                "reads_by_sectors": dev.rds_hist[1:],
                "writes_by_sectors": dev.wrs_hist[1:],
                "pre_real": dev.pre_real,
                "pre_latch": dev.pre_latch,
                "bytes_on_bus": dev.bytes_on_bus,
                "faw_stall_cycles": ctrl.stat_stall_faw,
                "prefetches_dropped": ctrl.stat_pf_dropped,
                "gate_windows": ctrl.stat_windows,
                "gate_windows_on": ctrl.stat_windows_on,
                "avg_read_queue":
                    ctrl.stat_occ_total / self.end_mem if self.end_mem else 0.0,
            })

        insts = sum(core.retired for core in self.cores)
        wall = max(core.cycles for core in self.cores)
        audit_ok = all(a.ok for a in self.auditors)
        report = {
            "version": __version__,
            "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
            "totals": {
                "instructions": insts,
                "cpu_cycles": wall,
                "mem_cycles": self.end_mem,
                "ipc": insts / wall if wall else 0.0,
                "bytes_on_bus": sum(r["bytes_on_bus"] for r in dram_rows),
                "llc_mpki": 1000.0 * sum(self.hier.l3_misses_by_core) / insts
                            if insts else 0.0,
            },
            "cores": core_rows,
            "cache": dict(self.hier.stat),
            "dram": dram_rows,
            "energy": ledger.as_dict(),
            "audit": {
                "ok": audit_ok,
                "violations": sum(len(a.violations) for a in self.auditors),
                "first_violations": [v for a in self.auditors
                                     for v in a.violations[:3]],
                "window_stats": [a.window_stats() for a in self.auditors],
            },
        }
        return report


def run_sim(cfg: SimConfig, traces, log_fns=None,
            record_fetch_masks: bool = False) -> tuple[dict, Simulation]:
    sim = Simulation(cfg, traces, log_fns=log_fns,
                     record_fetch_masks=record_fetch_masks)
    sim.run()
    return sim.report(), sim


def weighted_speedup(alone: list[dict], mix: dict) -> float:
    """Sum over cores of IPC in the mix over IPC of the same workload alone.

    Each alone report must be a single-core run of the matching core's
    workload; with no contention at all the value equals the core count.
    """
    rows = mix["cores"]
    if len(alone) != len(rows) or not rows:
        raise ValueError("need one single-core alone report per mix core")
    total = 0.0
    for solo, row in zip(alone, rows):
        srows = solo["cores"]
        if len(srows) != 1:
            raise ValueError("alone reports must come from single-core runs")
        total += row["ipc"] / srows[0]["ipc"]
    return total


def parallel_speedup(base: dict, target: dict) -> float:
    """Wall-clock cycles of the reference run over the target run."""
    return base["totals"]["cpu_cycles"] / target["totals"]["cpu_cycles"]
