"""Simulation configuration: flat key=value files, timing conversion, clocks.

All DRAM timing parameters are given in nanoseconds as exact decimal strings
and converted to whole controller cycles by ceiling (tCK = 2000/data_rate ns).
CPU (3600 MHz) and memory (1600 MHz) clocks share an integer time base: one
unit = 1 / (cpu_mhz * mem_mhz / gcd) us, so a CPU cycle and a memory cycle
are both whole numbers of units and no float time arithmetic ever happens.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Any

from .types import Geometry


class Mode(enum.Enum):
    BASELINE = "baseline"
    BASIC = "basic"
    LA = "la"
    LASP = "lasp"
    DYNAMIC = "dynamic"

    @property
    def sectored(self) -> bool:
        return self is not Mode.BASELINE

    @property
    def la_enabled(self) -> bool:
        return self in (Mode.LA, Mode.LASP, Mode.DYNAMIC)

    @property
    def sp_enabled(self) -> bool:
        return self in (Mode.LASP, Mode.DYNAMIC)

    @property
    def gated(self) -> bool:
        return self is Mode.DYNAMIC


def ns_to_ps(ns: str | float | int) -> int:
    """Exact nanoseconds -> integer picoseconds. Rejects sub-ps values."""
    d = Decimal(str(ns)) * 1000
    if d != d.to_integral_value():
        raise ValueError(f"timing {ns} ns is not a whole number of picoseconds")
    ps = int(d)
    if ps < 0:
        raise ValueError(f"timing {ns} ns is negative")
    return ps


@dataclass
class TimingCycles:
    """DRAM timing parameters in whole controller cycles."""

    tck_ps: int
    trcd: int
    tras: int
    trc: int
    trp: int
    tfaw: int
    trrd_l: int
    trrd_s: int
    cl: int
    tcwl: int
    twr: int
    trtp: int
    tccd_l: int
    tccd_s: int
    twtr_l: int
    twtr_s: int


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


@dataclass
class SimConfig:
    # system
    cores: int = 8
    channels: int = 1
    mode: str = "lasp"
    seed: int = 1
    max_insts: int | None = None  # None = run traces to completion

    # core
    cpu_mhz: int = 3600
    window_entries: int = 128
    retire_width: int = 4
    fetch_width: int = 4
    mshrs: int = 8
    la_depth: int = 128

    # caches
    l1_kib: int = 32
    l1_ways: int = 8
    l1_latency: int = 4
    l2_kib: int = 256
    l2_ways: int = 8
    l2_latency: int = 12
    l3_mib: int = 8
    l3_ways: int = 16
    l3_latency: int = 38
    l3_policy: str = "lip"  # lip | lru

    # predictor / prefetcher
    sp_entries: int = 512
    pf_enable: bool = False
    pf_regions: int = 64
    pf_degree: int = 4
    pf_distance: int = 4
    pf_confirm: int = 4

    # DRAM geometry and clocking
    ranks: int = 4
    banks: int = 16
    rows: int = 32768
    columns: int = 128
    data_rate: int = 3200  # MT/s; controller clock = data_rate/2 MHz

    # DRAM timings (ns, exact decimal strings; ceiling-converted to cycles)
    trcd_ns: str = "13.75"
    tras_ns: str = "35"
    trc_ns: str = "48.75"
    trp_ns: str = "13.75"
    tfaw_ns: str = "25"
    trrd_l_ns: str = "5"
    trrd_s_ns: str = "2.5"
    taa_ns: str = "12.5"
    tcwl_ns: str = "11.25"
    twr_ns: str = "15"
    trtp_ns: str = "7.5"
    tccd_l_ns: str = "5"
    tccd_s_ns: str = "2.5"
    twtr_l_ns: str = "7.5"
    twtr_s_ns: str = "2.5"

    # controller
    read_queue: int = 64
    write_queue: int = 64
    drain_high: int = 48
    drain_low: int = 16
    frfcfs_cap: int = 16
    starvation_bound: int = 1_000_000
    gate_window: int = 1000
    gate_threshold: int = 30
    faw_sectors: int = 32
    faw_acts: int = 4
    force_full_masks: bool = False
    act_budget: str = "auto"  # auto | baseline | sectored

    # energy constants (see configs/default.cfg for provenance)
    e_act8_pj: float = 7810.0
    e_rd8_pj: float = 2880.0
    e_wr8_pj: float = 3120.0
    r_act: float = 0.873
    r_rd: float = 0.300
    r_wr: float = 0.294
    sa_overhead: float = 1.0026
    p_bg_active_mw: float = 384.0
    p_bg_precharged_mw: float = 326.4
    proc_dyn_w: float = 101.7
    proc_static_w: float = 32.0

    def __post_init__(self) -> None:
        if self.mode not in [m.value for m in Mode]:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.l3_policy not in ("lip", "lru"):
            raise ValueError(f"unknown l3_policy {self.l3_policy!r}")
        if self.act_budget not in ("auto", "baseline", "sectored"):
            raise ValueError(f"unknown act_budget {self.act_budget!r}")
        for name in ("cores", "channels", "cpu_mhz", "data_rate", "mshrs",
                     "window_entries", "retire_width", "fetch_width",
                     "read_queue", "write_queue", "sp_entries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.la_depth < 0:
            raise ValueError("la_depth must be >= 0")
        if self.max_insts is not None and self.max_insts < 0:
            raise ValueError("max_insts must be >= 0 (0 runs nothing)")
        if not (0 < self.drain_low < self.drain_high <= self.write_queue):
            raise ValueError("need 0 < drain_low < drain_high <= write_queue")
        if self.sp_entries & (self.sp_entries - 1):
            raise ValueError("sp_entries must be a power of two")

        if 2_000_000 % self.data_rate:
            raise ValueError("data_rate must divide 2e6 ps exactly")
        tck_ps = 2_000_000 // self.data_rate

        def cyc(ns: str) -> int:
            return -(-ns_to_ps(ns) // tck_ps)

        self.timing = TimingCycles(
            tck_ps=tck_ps,
            trcd=cyc(self.trcd_ns), tras=cyc(self.tras_ns),
            trc=cyc(self.trc_ns), trp=cyc(self.trp_ns),
            tfaw=cyc(self.tfaw_ns),
            trrd_l=cyc(self.trrd_l_ns), trrd_s=cyc(self.trrd_s_ns),
            cl=cyc(self.taa_ns), tcwl=cyc(self.tcwl_ns),
            twr=cyc(self.twr_ns), trtp=cyc(self.trtp_ns),
            tccd_l=cyc(self.tccd_l_ns), tccd_s=cyc(self.tccd_s_ns),
            twtr_l=cyc(self.twtr_l_ns), twtr_s=cyc(self.twtr_s_ns),
        )
        if ns_to_ps(self.trc_ns) != ns_to_ps(self.tras_ns) + ns_to_ps(self.trp_ns):
            raise ValueError("tRC must equal tRAS + tRP")

        self.mem_mhz = self.data_rate // 2
        g = math.gcd(self.cpu_mhz, self.mem_mhz)
        self.units_per_cpu = self.mem_mhz // g
        self.units_per_mem = self.cpu_mhz // g

        self.geometry = Geometry(channels=self.channels, ranks=self.ranks,
                                 banks=self.banks, rows=self.rows,
                                 columns=self.columns)

        m = Mode(self.mode)
        self.mode_enum = m
        self.eff_la_depth = self.la_depth if m.la_enabled else 0
        self.eff_sp = m.sp_enabled
        self.eff_force_full = self.force_full_masks or m is Mode.BASELINE
        if self.act_budget == "auto":
            self.baseline_budget = m is Mode.BASELINE
        else:
            self.baseline_budget = self.act_budget == "baseline"

    # --- clock-domain helpers (all integer) ---

    def cpu_to_units(self, c: int) -> int:
        return c * self.units_per_cpu

    def mem_to_units(self, m: int) -> int:
        return m * self.units_per_mem

    def units_to_mem_ceil(self, u: int) -> int:
        return -(-u // self.units_per_mem)

    def units_to_cpu_ceil(self, u: int) -> int:
        return -(-u // self.units_per_cpu)

    def echo(self) -> dict[str, Any]:
        """Plain-value snapshot of every configured field, for reports."""
        out = {}
        for f in dataclasses.fields(self):
            out[f.name] = getattr(self, f.name)
        return out


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; blank lines ignored."""
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, val = line.split("=", 1)
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ValueError(f"config line {lineno}: empty key or value")
        items[key] = val
    return items


def build_config(items: dict[str, str] | None = None, **overrides: Any) -> SimConfig:
    """Build a SimConfig from string items (config file) plus typed overrides.

    Unknown keys are an error. String values are coerced by the field's
    declared type; the *_ns timing fields stay strings.
    """
    fields = {f.name: f for f in dataclasses.fields(SimConfig)}
    kwargs: dict[str, Any] = {}
    for key, val in (items or {}).items():
        if key not in fields:
            known = ", ".join(sorted(fields))
            raise ValueError(f"unknown config key {key!r} (known keys: {known})")
        ftype = fields[key].type
        if ftype == "bool":
            low = val.lower()
            if low not in _BOOL_WORDS:
                raise ValueError(f"config key {key!r}: expected a boolean, got {val!r}")
            kwargs[key] = _BOOL_WORDS[low]
        elif ftype in ("int", "int | None"):
            kwargs[key] = int(val, 0)
        elif ftype == "float":
            kwargs[key] = float(val)
        else:
            kwargs[key] = val
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = val
    return SimConfig(**kwargs)


def load_config(path: str, **overrides: Any) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return build_config(parse_config_text(fh.read()), **overrides)
