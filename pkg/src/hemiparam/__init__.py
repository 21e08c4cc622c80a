"""Hemispheroidal parameterization and harmonic decomposition of open surfaces."""

__version__ = "0.1.0"
