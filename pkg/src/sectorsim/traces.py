"""Trace parsing, rendering, and deterministic microbenchmark generators.

Trace line format: `<bubbles> <pc-hex> <vaddr-hex> <R|W>`, with `#` comments.
Generators are pure functions of their parameters and yield entries lazily so
multi-million-access workloads never materialize in memory.

PRNG: xorshift64* (Vigna). state' = xorshift(state); output = state' * M.
Fixed here by name so traces are reproducible across implementations.
"""
from __future__ import annotations

from typing import Iterable, Iterator, NamedTuple

_M64 = (1 << 64) - 1
_XS_MULT = 2685821657736338717
_ZERO_SEED = 0x9E3779B97F4A7C15  # xorshift state must be nonzero


class TraceEntry(NamedTuple):
    bubbles: int
    pc: int
    vaddr: int
    kind: str  # "R" or "W"


class Xorshift64Star:
    def __init__(self, seed: int) -> None:
        self.state = (seed & _M64) or _ZERO_SEED

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _M64
        x ^= x >> 27
        self.state = x
        return (x * _XS_MULT) & _M64


def parse_trace(lines: Iterable[str]) -> Iterator[TraceEntry]:
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"trace line {lineno}: expected 4 fields, got {raw!r}")
        try:
            bubbles = int(parts[0])
            pc = int(parts[1], 16)
            vaddr = int(parts[2], 16)
        except ValueError:
            raise ValueError(f"trace line {lineno}: bad number in {raw!r}") from None
        kind = parts[3]
        if kind not in ("R", "W"):
            raise ValueError(f"trace line {lineno}: kind must be R or W, got {kind!r}")
        if bubbles < 0:
            raise ValueError(f"trace line {lineno}: negative bubble count")
        yield TraceEntry(bubbles, pc, vaddr & ~0b111, kind)


def parse_trace_file(path: str) -> Iterator[TraceEntry]:
    with open(path, "r", encoding="utf-8") as fh:
        yield from parse_trace(fh)


def render_trace(entries: Iterable[TraceEntry]) -> Iterator[str]:
    for e in entries:
        yield f"{e.bubbles} 0x{e.pc:x} 0x{e.vaddr:x} {e.kind}"


def write_trace_file(path: str, entries: Iterable[TraceEntry]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for line in render_trace(entries):
            fh.write(line + "\n")
            n += 1
    return n


def gen_random(seed: int, n_accesses: int, footprint_bytes: int,
               pc: int = 0x400000, bubbles: int = 4) -> Iterator[TraceEntry]:
    """Loads of uniformly random words: one load per `bubbles`+1 instructions."""
    if n_accesses <= 0:
        raise ValueError("n_accesses must be positive")
    if footprint_bytes <= 0 or footprint_bytes % 8:
        raise ValueError("footprint must be a positive multiple of 8")
    rng = Xorshift64Star(seed)
    words = footprint_bytes // 8
    for _ in range(n_accesses):
        yield TraceEntry(bubbles, pc, (rng.next() % words) * 8, "R")


def gen_stride(n_passes: int, region_bytes: int = 16 * 2**20,
               pc: int = 0x400000, bubbles: int = 4,
               base: int = 0) -> Iterator[TraceEntry]:
    """64-byte-stride sweeps: offset 0 over the region, then offset 8, ... 56.

    One pass visits every word of the region exactly once (region/8 entries).
    `base` shifts the whole region, e.g. to give each core its own copy.
    """
    if n_passes <= 0:
        raise ValueError("n_passes must be positive")
    if region_bytes <= 0 or region_bytes % 64:
        raise ValueError("region must be a positive multiple of 64")
    if base < 0 or base % 64:
        raise ValueError("base must be a nonnegative multiple of 64")
    for _ in range(n_passes):
        for offset in range(0, 64, 8):
            for block in range(0, region_bytes, 64):
                yield TraceEntry(bubbles, pc, base + block + offset, "R")


def gen_seqwords(n_blocks: int, pc: int = 0x400000,
                 bubbles: int = 0) -> Iterator[TraceEntry]:
    """Eight back-to-back loads covering words 0..7 of each block in order."""
    if n_blocks <= 0:
        raise ValueError("n_blocks must be positive")
    for b in range(n_blocks):
        base = b * 64
        for w in range(8):
            yield TraceEntry(bubbles, pc, base + w * 8, "R")
