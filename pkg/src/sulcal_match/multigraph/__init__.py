"""Multi-graph matching over a bulk assignment."""
from .consistency import graph_consistency, mean_graph_consistency, node_consistency
from .msync import msync, SyncResult, SynchronizationError
from .mals import mals, MalsResult, build_target, binarize
from .cao import cao_cst, CaoResult

__all__ = [
    "graph_consistency", "mean_graph_consistency", "node_consistency",
    "msync", "SyncResult", "SynchronizationError",
    "mals", "MalsResult", "build_target", "binarize",
    "cao_cst", "CaoResult",
]
