"""Cycle-consistency measures over a binary bulk assignment."""
from __future__ import annotations

import numpy as np

from ..assignment import BulkAssignment, UNMATCHED


def _through(bulk: BulkAssignment, q: int) -> np.ndarray:
    """``out[i, j] = match of X_iq @ X_qj`` for every pair, shape ``(N, N, n)``."""
    t = bulk.perm[:, q, :]                                  # (N, n): X_iq
    safe = np.where(t >= 0, t, 0)
    out = bulk.perm[q][np.arange(bulk.N)[None, :, None], safe[:, None, :]]
    return np.where(t[:, None, :] >= 0, out, UNMATCHED)


def match_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius distance between partial permutations given as match maps (last axis)."""
    na = np.sum(a >= 0, axis=-1)
    nb = np.sum(b >= 0, axis=-1)
    agree = np.sum((a == b) & (a >= 0), axis=-1)
    return np.sqrt(na + nb - 2 * agree)


def graph_consistency(q: int, bulk: BulkAssignment, n_q: int | None = None) -> float:
    """Unitary consistency of graph ``q``::

        1 - sum_{i<j} |X_ij - X_iq X_qj|_F / 2  /  (n_q N (N-1) / 2)

    ``n_q`` defaults to the padded size, since the bulk includes dummy rows.
    """
    N = bulk.N
    if N < 2:
        return 1.0
    n_q = bulk.n if n_q is None else n_q
    dist = match_distance(bulk.perm, _through(bulk, q))
    iu = np.triu_indices(N, 1)
    return float(1.0 - np.sum(dist[iu]) / 2.0 / (n_q * N * (N - 1) / 2.0))


def mean_graph_consistency(bulk: BulkAssignment) -> float:
    return float(np.mean([graph_consistency(q, bulk) for q in range(bulk.N)]))


def node_consistency(bulk: BulkAssignment) -> np.ndarray:
    """Per-node consistency, shape ``(N, n)`` (dummy rows included).

    For node ``v`` of graph ``k``, with ``Y_ij = X_kj - X_ki X_ij``::

        1 - sum_{i<j} |Y_ij(v, :)| / 2  /  (N (N-1) / 2)
    """
    N, n = bulk.N, bulk.n
    out = np.ones((N, n))
    if N < 2:
        return out
    I = np.arange(N)[:, None, None]
    J = np.arange(N)[None, :, None]
    upper = np.triu(np.ones((N, N), dtype=bool), 1)
    for k in range(N):
        direct = bulk.perm[k]                               # (N, n): X_kj rows
        t = bulk.perm[k]                                    # X_ki rows, indexed by i
        safe = np.where(t >= 0, t, 0)
        via = bulk.perm[I, J, safe[:, None, :]]             # X_ij at X_ki(v)
        via = np.where(t[:, None, :] >= 0, via, UNMATCHED)
        a = np.broadcast_to(direct[None, :, :], via.shape)
        # row norm of a one-hot difference: 0 equal, 1 one side empty, sqrt 2 otherwise
        both = (a >= 0) & (via >= 0)
        norm = np.where(a == via, 0.0, np.where(both, np.sqrt(2.0), 1.0))
        out[k] = 1.0 - np.sum(norm[upper], axis=0) / 2.0 / (N * (N - 1) / 2.0)
    return out
