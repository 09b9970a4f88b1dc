"""Correlation OTDR fibre-latency simulator and signal-processing library."""

__version__ = "0.1.0"
