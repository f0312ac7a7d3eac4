"""Shared value types: sector masks, request kinds, DRAM address geometry.

A cache block is 64 bytes split into 8 sectors of 8 bytes (one word each).
Sector masks are plain ints in [0, 255]; bit i covers word i.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple

WORD_BYTES = 8
SECTORS_PER_BLOCK = 8
BLOCK_BYTES = WORD_BYTES * SECTORS_PER_BLOCK
FULL_MASK = (1 << SECTORS_PER_BLOCK) - 1


def mask_from_words(words: Iterable[int]) -> int:
    m = 0
    for w in words:
        if not 0 <= w < SECTORS_PER_BLOCK:
            raise ValueError(f"word index out of range: {w}")
        m |= 1 << w
    return m


def words_from_mask(mask: int) -> list[int]:
    return [w for w in range(SECTORS_PER_BLOCK) if mask >> w & 1]


def popcount(mask: int) -> int:
    return mask.bit_count()


def mask_hex(mask: int) -> str:
    return f"{mask:02x}"


class Kind(enum.Enum):
    READ = "R"
    WRITE = "W"


class Coords(NamedTuple):
    """Physical location of one block: channel, rank, bank, row, column."""

    channel: int
    rank: int
    bank: int
    row: int
    column: int


@dataclass
class Geometry:
    """Address interleaving for the memory system.

    Field order from least to most significant address bit:
    byte-in-word (3, dropped), word-in-block (3), channel, column (7),
    rank (2), bank (4), row (15). Channel uses log2(channels) bits, zero
    bits for a single channel. One channel spans 16 GiB; addresses wrap
    modulo total capacity.
    """

    channels: int = 1
    ranks: int = 4
    banks: int = 16
    rows: int = 1 << 15
    columns: int = 1 << 7  # block-sized columns per row

    def __post_init__(self) -> None:
        for name in ("channels", "ranks", "banks", "rows", "columns"):
            v = getattr(self, name)
            if v < 1 or v & (v - 1):
                raise ValueError(f"{name} must be a power of two, got {v}")
        self.channel_bits = self.channels.bit_length() - 1
        self.column_bits = self.columns.bit_length() - 1
        self.rank_bits = self.ranks.bit_length() - 1
        self.bank_bits = self.banks.bit_length() - 1
        self.row_bits = self.rows.bit_length() - 1
        self.channel_bytes = self.ranks * self.banks * self.rows * self.columns * BLOCK_BYTES
        self.total_bytes = self.channel_bytes * self.channels

    def decompose(self, addr: int) -> tuple[Coords, int]:
        """Map a byte address to (coords, word index). Wraps modulo capacity."""
        a = (addr % self.total_bytes) >> 3
        word = a & 0b111
        a >>= 3
        channel = a & (self.channels - 1)
        a >>= self.channel_bits
        column = a & (self.columns - 1)
        a >>= self.column_bits
        rank = a & (self.ranks - 1)
        a >>= self.rank_bits
        bank = a & (self.banks - 1)
        a >>= self.bank_bits
        row = a & (self.rows - 1)
        return Coords(channel, rank, bank, row, column), word

    def recompose(self, coords: Coords, word: int = 0) -> int:
        """Inverse of decompose (byte 0 of the word)."""
        a = coords.row
        a = (a << self.bank_bits) | coords.bank
        a = (a << self.rank_bits) | coords.rank
        a = (a << self.column_bits) | coords.column
        a = (a << self.channel_bits) | coords.channel
        a = (a << 3) | word
        return a << 3

    def block_id(self, addr: int) -> int:
        """Stable per-block key: the wrapped address with the low 6 bits cleared."""
        return (addr % self.total_bytes) >> 6


def bank_group(bank: int) -> int:
    """Bank group of a bank index; consecutive banks alternate groups."""
    return bank & 0b11


@dataclass
class MemoryRequest:
    """One block-granularity transfer handed to the memory controller."""

    kind: Kind
    coords: Coords
    mask: int
    block: int
    core: int = 0
    seq: int = 0
    enqueue_cycle: int = 0
    prefetch: bool = False
    writeback: bool = False
    caused_act: bool = False
    done: bool = False
    done_cycle: int = -1

    def __post_init__(self) -> None:
        if not 0 < self.mask <= FULL_MASK:
            raise ValueError(f"request mask must be nonzero 8-bit, got {self.mask:#x}")
