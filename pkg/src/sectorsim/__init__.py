"""Cycle-level simulator of a sectored DRAM memory system."""

__version__ = "0.1.0"
