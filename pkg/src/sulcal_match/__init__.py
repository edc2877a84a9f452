"""Synthetic sulcal-graph generation and multi-graph matching benchmarks."""
__version__ = "0.1.0"
