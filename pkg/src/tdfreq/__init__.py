"""Transmission-and-distribution frequency dynamic co-simulation."""

__version__ = "0.1.0"
