"""Configuration parsing and timing conversion."""
import math

import pytest

from sectorsim.config import Mode, SimConfig, build_config, ns_to_ps, parse_config_text


def test_default_timing_cycles():
    # DDR4-3200: tCK = 625 ps; every default divides exactly, ceiling is a no-op
    t = SimConfig().timing
    assert t.tck_ps == 625
    assert (t.trcd, t.tras, t.trc, t.trp) == (22, 56, 78, 22)
    assert t.tfaw == 40
    assert (t.trrd_l, t.trrd_s) == (8, 4)
    assert (t.cl, t.tcwl) == (20, 18)
    assert (t.twr, t.trtp) == (24, 12)
    assert (t.tccd_l, t.tccd_s) == (8, 4)
    assert (t.twtr_l, t.twtr_s) == (12, 4)


def test_ceiling_conversion():
    # 13.0 ns at 625 ps = 20.8 cycles -> 21
    cfg = SimConfig(trcd_ns="13.0")
    assert cfg.timing.trcd == 21
    with pytest.raises(ValueError):
        ns_to_ps("0.0001")  # 0.1 ps is not whole


def test_trc_consistency_enforced():
    with pytest.raises(ValueError):
        SimConfig(trc_ns="50")


def test_clock_units():
    cfg = SimConfig()
    assert cfg.mem_mhz == 1600
    g = math.gcd(3600, 1600)
    assert cfg.units_per_cpu == 1600 // g == 4
    assert cfg.units_per_mem == 3600 // g == 9
    # one mem cycle is 2.25 cpu cycles; conversions are exact in units
    assert cfg.units_to_cpu_ceil(cfg.mem_to_units(4)) == 9
    assert cfg.units_to_mem_ceil(cfg.cpu_to_units(9)) == 4
    assert cfg.units_to_mem_ceil(cfg.cpu_to_units(1)) == 1


def test_mode_flags():
    assert not Mode.BASELINE.sectored
    assert Mode.BASIC.sectored and not Mode.BASIC.la_enabled
    assert Mode.LA.la_enabled and not Mode.LA.sp_enabled
    assert Mode.LASP.sp_enabled and not Mode.LASP.gated
    assert Mode.DYNAMIC.gated and Mode.DYNAMIC.sp_enabled
    cfg = SimConfig(mode="baseline")
    assert cfg.eff_force_full and cfg.baseline_budget and cfg.eff_la_depth == 0
    cfg = SimConfig(mode="basic", force_full_masks=True, act_budget="baseline")
    assert cfg.eff_force_full and cfg.baseline_budget


def test_parse_config_text():
    items = parse_config_text("# comment\ncores = 4\nmode = la  # trailing\n\n")
    assert items == {"cores": "4", "mode": "la"}
    with pytest.raises(ValueError):
        parse_config_text("cores 4")


def test_build_config_types_and_unknown_keys():
    cfg = build_config({"cores": "2", "pf_enable": "true", "r_rd": "0.25",
                        "trcd_ns": "13.75", "mode": "basic"})
    assert cfg.cores == 2 and cfg.pf_enable is True and cfg.r_rd == 0.25
    assert cfg.mode_enum is Mode.BASIC
    with pytest.raises(ValueError, match="unknown config key"):
        build_config({"corez": "2"})
    with pytest.raises(ValueError, match="boolean"):
        build_config({"pf_enable": "maybe"})
    cfg = build_config({"cores": "8"}, mode="lasp", seed=7)
    assert cfg.seed == 7


def test_validation_errors():
    with pytest.raises(ValueError):
        SimConfig(mode="sectored")
    with pytest.raises(ValueError):
        SimConfig(drain_low=50, drain_high=48)
    with pytest.raises(ValueError):
        SimConfig(sp_entries=500)
    with pytest.raises(ValueError):
        SimConfig(la_depth=-1)


def test_echo_roundtrip():
    cfg = SimConfig(cores=3, mode="la")
    echo = cfg.echo()
    again = SimConfig(**echo)
    assert again.echo() == echo
