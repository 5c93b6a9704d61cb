"""Communication-constrained remote reinforcement learning simulator."""

__version__ = "0.1.0"
