"""Energy-law-preserving finite elements for two-phase flow with variable density."""

__version__ = "0.1.0"
