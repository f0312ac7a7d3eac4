"""Command-line front end: run, gen, audit, compare.

`run` simulates one trace per core and writes a JSON report; its exit
status is 0 only when the report was written and the command auditor saw
no violations. `gen` renders the built-in microbenchmark generators to
trace files. `audit` re-checks written command logs. `compare` prints a
CSV ratio table of two reports' headline metrics.
"""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import ExitStack

from .audit import audit_lines
from .config import build_config, parse_config_text
from .sim import run_sim
from .traces import gen_random, gen_seqwords, gen_stride, parse_trace_file, write_trace_file

_MODES = ("baseline", "basic", "la", "lasp", "dynamic")


def _load_items(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _log_paths(path: str, channels: int) -> list[str]:
    if channels == 1:
        return [path]
    return [f"{path}.ch{ch}" for ch in range(channels)]


def _cmd_run(args: argparse.Namespace) -> int:
    items = _load_items(args.config)
    if "cores" in items and int(items["cores"], 0) != len(args.trace):
        print(f"error: config wants {items['cores']} cores but "
              f"{len(args.trace)} traces given", file=sys.stderr)
        return 2
    try:
        cfg = build_config(items, cores=len(args.trace), mode=args.mode,
                           channels=args.channels, seed=args.seed,
                           max_insts=args.max_insts)
        traces = [list(parse_trace_file(p)) for p in args.trace]
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    tck = cfg.timing.tck_ps
    with ExitStack() as stack:
        log_fns = None
        if args.cmd_log:
            files = [stack.enter_context(open(p, "w", encoding="utf-8"))
                     for p in _log_paths(args.cmd_log, cfg.channels)]

            def writer(fh):
                def fn(cycle, cmd, rank, bank, row, mask):
                    r = "-" if row is None or row < 0 else str(row)
                    fh.write(f"{cycle * tck} {cmd} {rank} {bank} {r} {mask:02x}\n")
                return fn

            log_fns = [writer(fh) for fh in files]
        report, _ = run_sim(cfg, traces, log_fns=log_fns)

    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if not report["audit"]["ok"]:
        n = report["audit"]["violations"]
        print(f"error: auditor flagged {n} command-timing violations",
              file=sys.stderr)
        return 1
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    try:
        if args.generator == "random":
            entries = gen_random(args.seed, args.n, args.footprint)
        elif args.generator == "stride":
            entries = gen_stride(args.passes, args.region, base=args.base)
        else:
            entries = gen_seqwords(args.blocks)
        n = write_trace_file(args.out, entries)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {n} accesses to {args.out}")
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    try:
        cfg = build_config(_load_items(args.config), mode=args.mode)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    bad = 0
    for path in args.log:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                auditor = audit_lines(cfg, fh)
        except OSError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        if auditor.ok:
            print(f"{path}: ok ({auditor.n_cmds} commands)")
        else:
            bad += 1
            print(f"{path}: {len(auditor.violations)} violations")
            for v in auditor.violations[:10]:
                print(f"  {v}")
    return 1 if bad else 0


_COMPARE_KEYS = ("instructions", "cpu_cycles", "mem_cycles", "ipc",
                 "bytes_on_bus", "llc_mpki")


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        with open(args.a, "r", encoding="utf-8") as fh:
            rep_a = json.load(fh)
        with open(args.b, "r", encoding="utf-8") as fh:
            rep_b = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    rows = [("metric", "a", "b", "b_over_a")]
    for key in _COMPARE_KEYS:
        va, vb = rep_a["totals"][key], rep_b["totals"][key]
        ratio = f"{vb / va:.6g}" if va else ""
        rows.append((key, f"{va:.6g}", f"{vb:.6g}", ratio))
    for key in ("act_pj", "rdwr_pj", "background_pj", "dram_pj", "total_pj"):
        va, vb = rep_a["energy"][key], rep_b["energy"][key]
        ratio = f"{vb / va:.6g}" if va else ""
        rows.append((key, f"{va:.6g}", f"{vb:.6g}", ratio))
    text = "\n".join(",".join(row) for row in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sectorsim",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate traces and write a report")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--trace", action="append", required=True,
                     metavar="PATH", help="trace file, once per core")
    run.add_argument("--mode", choices=_MODES)
    run.add_argument("--channels", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="report path (default: stdout)")
    run.add_argument("--cmd-log", help="command log path; with multiple "
                     "channels, one file per channel suffixed .ch<k>")
    run.add_argument("--max-insts", type=int,
                     help="per-core instruction budget (0 runs nothing)")
    run.set_defaults(fn=_cmd_run)

    gen = sub.add_parser("gen", help="write a microbenchmark trace")
    gsub = gen.add_subparsers(dest="generator", required=True)
    gr = gsub.add_parser("random", help="uniform random word loads")
    gr.add_argument("--seed", type=int, default=1)
    gr.add_argument("--n", type=int, required=True, metavar="ACCESSES")
    gr.add_argument("--footprint", type=int, default=1 << 30,
                    help="bytes of address space touched (default 1 GiB)")
    gs = gsub.add_parser("stride", help="64-byte-stride region sweeps")
    gs.add_argument("--passes", type=int, required=True)
    gs.add_argument("--region", type=int, default=16 * 2**20,
                    help="region bytes (default 16 MiB)")
    gs.add_argument("--base", type=int, default=0,
                    help="region start address (default 0)")
    gq = gsub.add_parser("seqwords", help="eight sequential words per block")
    gq.add_argument("--blocks", type=int, required=True)
    for g in (gr, gs, gq):
        g.add_argument("--out", required=True, help="trace file to write")
        g.set_defaults(fn=_cmd_gen)

    aud = sub.add_parser("audit", help="check command logs for violations")
    aud.add_argument("--config", help="key = value config file")
    aud.add_argument("--mode", choices=_MODES,
                     help="mode the logs were produced under")
    aud.add_argument("log", nargs="+", help="command log file(s)")
    aud.set_defaults(fn=_cmd_audit)

    cmp_ = sub.add_parser("compare", help="CSV ratio table of two reports")
    cmp_.add_argument("a", help="reference report (JSON)")
    cmp_.add_argument("b", help="target report (JSON)")
    cmp_.add_argument("--out", help="CSV path (default: stdout)")
    cmp_.set_defaults(fn=_cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
