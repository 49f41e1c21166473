"""Tabular inverse reinforcement learning from offline and online data."""

__version__ = "0.1.0"
