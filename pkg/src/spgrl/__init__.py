"""Dual-view GCN node classification with cross-view contrast and exchange reconstruction."""

__version__ = "0.1.0"
