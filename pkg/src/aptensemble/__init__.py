"""Ensemble RL anomaly detection for APT-style process behavior."""

__version__ = "0.1.0"
