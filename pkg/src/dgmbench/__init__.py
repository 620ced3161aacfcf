"""Simulator and metrics for buyer-baseline distributed gradient marketplaces."""
__version__ = "0.1.0"
