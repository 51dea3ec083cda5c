"""Dual-channel hypergraph convolutional networks for session-based recommendation."""

__version__ = "0.1.0"
