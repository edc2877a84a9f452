"""Spectral permutation synchronization (mSync)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import eigsh, ArpackNoConvergence

from ..assignment import BulkAssignment, invert_match

log = logging.getLogger(__name__)

DENSE_EIG_MAX = 4000


class SynchronizationError(RuntimeError):
    """The eigensolver did not converge."""


@dataclass
class SyncResult:
    bulk: BulkAssignment
    universe: np.ndarray          # (N, n): universe slot of every padded node
    eigenvalues: np.ndarray
    meta: dict = field(default_factory=dict)

    def universe_matrix(self, q: int) -> np.ndarray:
        U = np.zeros((self.universe.shape[1], self.universe.shape[1]))
        U[np.arange(len(U)), self.universe[q]] = 1.0
        return U


def _top_eigvecs(W, d: int, tol: float):
    m = W.shape[0]
    if m <= DENSE_EIG_MAX:
        dense = W.toarray() if sp.issparse(W) else np.asarray(W, dtype=float)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[m - d, m - 1])
        return vals[::-1], vecs[:, ::-1], "dense"
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(m)
    try:
        vals, vecs = eigsh(W, k=d, which="LA", tol=tol, v0=v0, maxiter=max(1000, 20 * m))
    except ArpackNoConvergence as exc:
        vecs = exc.eigenvectors
        vals = exc.eigenvalues
        resid = np.linalg.norm(W @ vecs - vecs * vals, axis=0).max() if len(vals) else np.inf
        raise SynchronizationError(
            f"Lanczos did not converge: {len(vals)}/{d} eigenpairs, residual {resid:.3g}") from None
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order], "lanczos"


def msync(bulk, n_graphs: int | None = None, n: int | None = None, d: int | None = None,
          reference: int = 0, tol: float = 1e-8) -> SyncResult:
    """Synchronize a (binary or real) bulk matrix through a common universe.

    The ``d`` leading eigenvectors of the symmetrized bulk are split into
    per-graph ``n x d`` blocks ``V_q``. The reference graph's nodes define
    the universe; graph ``q`` is mapped into it by an optimal assignment on
    ``V_q V_ref'``. Output blocks are ``X_ij = U_i U_j'``, which satisfy
    ``X_ik = X_ij X_jk`` for every triple by construction.
    """
    if isinstance(bulk, BulkAssignment):
        N, n = bulk.N, bulk.n
        W = bulk.to_sparse()
    else:
        if n_graphs is None or n is None:
            raise ValueError("a matrix bulk needs n_graphs and n")
        N = n_graphs
        W = bulk
    d = n if d is None else int(d)
    m = N * n
    if W.shape != (m, m):
        raise ValueError(f"bulk shape {W.shape} != {(m, m)}")
    W = (W + W.T) * 0.5
    vals, V, method = _top_eigvecs(W, d, tol)
    blocks = V.reshape(N, n, d)
    ref = blocks[reference]
    universe = np.empty((N, n), dtype=np.int64)
    for q in range(N):
        rows, cols = linear_sum_assignment(blocks[q] @ ref.T, maximize=True)
        universe[q, rows] = cols
    universe[reference] = np.arange(n)
    out = BulkAssignment(N, n)
    inv = np.stack([invert_match(universe[q], n) for q in range(N)])
    for i in range(N):
        for j in range(i + 1, N):
            out.set_block(i, j, inv[j][universe[i]])
    meta = {"method": "msync", "d": d, "reference": reference, "eigensolver": method, "tol": tol}
    return SyncResult(out, universe, vals, meta)
