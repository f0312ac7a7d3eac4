"""Region-based stride prefetcher observing demand traffic at the last-level
cache.

State is a direct-mapped table of 4 KiB regions. A region entry tracks the
last block touched, the current stride in blocks, and a confidence counter.
Confidence must reach the confirm threshold before a further stride-matching
access emits prefetch candidates; candidates falling outside the trigger's
region are dropped. Candidates carry the trigger's sector mask.
"""
from __future__ import annotations


class RegionEntry:
    __slots__ = ("tag", "last_block", "stride", "conf")

    def __init__(self, tag: int, block: int) -> None:
        self.tag = tag
        self.last_block = block
        self.stride = None
        self.conf = 1


class StridePrefetcher:
    def __init__(self, regions: int = 64, degree: int = 4, distance: int = 4,
                 confirm: int = 4, region_blocks: int = 64) -> None:
        if min(regions, degree, distance, confirm, region_blocks) <= 0:
            raise ValueError("prefetcher parameters must be positive")
        self.regions = regions
        self.degree = degree
        self.distance = distance
        self.confirm = confirm
        self.region_blocks = region_blocks
        self.table: dict[int, RegionEntry] = {}
        self.stat_emitted = 0

    def observe(self, block: int, mask: int) -> list[tuple[int, int]]:
        """Feed one demand access; returns prefetch candidates (block, mask)."""
        region = block // self.region_blocks
        slot = region % self.regions
        entry = self.table.get(slot)
        if entry is None or entry.tag != region:
            self.table[slot] = RegionEntry(region, block)
            return []

        delta = block - entry.last_block
        if delta == 0:
            return []

        trained = entry.conf >= self.confirm and entry.stride == delta
        if entry.stride == delta:
            entry.conf = min(entry.conf + 1, self.confirm)
        else:
            entry.stride = delta
            entry.conf = 2
        entry.last_block = block

        if not trained:
            return []
        lo = region * self.region_blocks
        hi = lo + self.region_blocks
        out = []
        for i in range(self.degree):
            target = block + (self.distance + i) * delta
            if lo <= target < hi:
                out.append((target, mask))
        self.stat_emitted += len(out)
        return out
