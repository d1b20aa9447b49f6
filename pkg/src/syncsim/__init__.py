"""Discrete-event simulator for quorum-based multi-point synchronization in fog deployments."""

__version__ = "0.1.0"
