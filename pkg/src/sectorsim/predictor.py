"""Sector usage predictor: a PC/word-indexed history table.

Each L1 allocation records which table entry produced its prediction; when the
line is evicted, the observed word-usage mask overwrites that entry. The table
port is modeled as single-write-per-cycle: competing same-cycle updates are
arbitrated by lowest cache-set index, and a write becomes visible to queries
only on the following cycle.
"""
from __future__ import annotations

from .types import FULL_MASK


def fold_index(pc: int, word: int, entries: int) -> int:
    v = (pc >> 2) ^ (word & 0b111)
    bits = max(1, (entries - 1).bit_length())
    group = (1 << bits) - 1
    folded = 0
    while v:
        folded ^= v & group
        v >>= bits
    return folded % entries


class SectorPredictor:
    def __init__(self, entries: int = 512) -> None:
        if entries <= 0:
            raise ValueError("entries must be positive")
        self.entries = entries
        self.table = [FULL_MASK] * entries
        self._pending = None  # (cycle, set_key, index, mask)
        self.stat_queries = 0
        self.stat_trains = 0
        self.stat_train_conflicts = 0

    def index(self, pc: int, word: int) -> int:
        return fold_index(pc, word, self.entries)

    def _flush(self, now: int) -> None:
        if self._pending is not None and self._pending[0] < now:
            _, _, idx, mask = self._pending
            self.table[idx] = mask
            self._pending = None

    def query(self, pc: int, word: int, now: int) -> int:
        self._flush(now)
        self.stat_queries += 1
        return self.table[self.index(pc, word)]

    def train(self, index: int, used_mask: int, now: int, set_key: int = 0) -> None:
        """Record the used-word mask observed at eviction."""
        self._flush(now)
        self.stat_trains += 1
        if self._pending is not None:
            # same-cycle conflict: the lower set index keeps the port
            self.stat_train_conflicts += 1
            if set_key >= self._pending[1]:
                return
        self._pending = (now, set_key, index, used_mask & FULL_MASK)
