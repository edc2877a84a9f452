"""Pairwise graph matching: Frank-Wolfe on the QAP relaxation + Hungarian rounding.

Objective for an ``n x n`` (soft or binary) assignment ``X``::

    J(X) = <psi, X> + vec(X)' W vec(X)

with ``W`` from :meth:`AffinityPair.quadratic_operator`. On binary ``X`` this
is exactly the Lawler form ``vec(X)' Phi vec(X)`` with ``diag(Phi) = psi``:
every node match adds ``psi[u, u']`` and every edge mapped onto an edge adds
its kernel twice (once per orientation of the symmetric ``Phi``).
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .affinity import AffinityPair, KernelBandwidths, pair_affinity, AffinityCache
from .assignment import BulkAssignment, PairAssignment, UNMATCHED
from .graphs import PaddedPopulation

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX = 8


def _as_matrix(X) -> np.ndarray:
    return X.matrix() if isinstance(X, PairAssignment) else np.asarray(X, dtype=float)


def qap_objective(X, affinity: AffinityPair, W=None) -> float:
    """``J(X)`` for a soft or binary assignment; dummy rows/columns add nothing."""
    X = _as_matrix(X)
    if X.shape != affinity.psi.shape:
        raise ValueError(f"assignment shape {X.shape} != affinity shape {affinity.psi.shape}")
    W = affinity.quadratic_operator() if W is None else W
    x = X.ravel()
    return float(np.sum(affinity.psi * X) + x @ (W @ x))


@dataclass
class FWResult:
    X: np.ndarray
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def frank_wolfe_match(affinity: AffinityPair, max_iters: int = 100, tol: float = 1e-6,
                      x0: np.ndarray | None = None) -> FWResult:
    """Maximize ``J`` over doubly-stochastic matrices by Frank-Wolfe.

    Starts from the barycenter ``1/n``. The linear step is an optimal
    assignment on the gradient; the step size is the exact maximizer of the
    quadratic ``J`` along the segment, so the objective trace never
    decreases. Stops when the relative gain drops below ``tol``.
    """
    n = affinity.n
    W = affinity.quadratic_operator()
    psi = affinity.psi.ravel()
    x = np.full(n * n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    Wx = W @ x
    f = float(psi @ x + x @ Wx)
    res = FWResult(x.reshape(n, n), [f])
    for it in range(1, max_iters + 1):
        grad = psi + 2.0 * Wx
        rows, cols = linear_sum_assignment(grad.reshape(n, n), maximize=True)
        s = np.zeros(n * n)
        s[rows * n + cols] = 1.0
        d = s - x
        Wd = W @ d
        slope = float(grad @ d)          # dJ/dt at t = 0, >= 0 by optimality of s
        curv = float(d @ Wd)             # J(x + t d) = f + slope t + curv t^2
        if curv < 0:
            t = min(1.0, max(0.0, -slope / (2.0 * curv)))
        else:
            t = 1.0 if slope + curv > 0 else 0.0
        gain = slope * t + curv * t * t
        res.iterations = it
        if t <= 0 or gain <= 0:
            res.converged = True
            res.trace.append(f)
            break
        x = x + t * d
        Wx = Wx + t * Wd
        f_new = float(psi @ x + x @ Wx)
        res.trace.append(f_new)
        rel = (f_new - f) / max(abs(f), 1e-12)
        f = f_new
        if rel < tol:
            res.converged = True
            break
    res.X = x.reshape(n, n)
    return res


def project_permutation(soft: np.ndarray, real_sizes: tuple[int, int] | None = None) -> PairAssignment:
    """Round a soft assignment to the partial permutation maximizing ``<X, soft>``.

    The optimal assignment is taken on the full padded square; any match
    that touches a dummy index (``>= n_i`` rows or ``>= n_j`` columns) is
    dropped, leaving that real node unmatched.
    """
    soft = np.asarray(soft, dtype=float)
    n = soft.shape[0]
    rows, cols = linear_sum_assignment(soft, maximize=True)
    match = np.full(n, UNMATCHED, dtype=np.int64)
    match[rows] = cols
    if real_sizes is not None:
        ni, nj = real_sizes
        match[ni:] = UNMATCHED
        match[match >= nj] = UNMATCHED
    return PairAssignment(match)


def lawler_matrix(affinity: AffinityPair) -> np.ndarray:
    """Dense ``Phi`` (row-major ``vec``) built entry by entry from the edge lists.

    Independent of :meth:`AffinityPair.quadratic_operator`; meant for small
    test instances only.
    """
    n = affinity.n
    Phi = np.zeros((n * n, n * n))
    for u in range(n):
        for up in range(n):
            Phi[u * n + up, u * n + up] = affinity.psi[u, up]
    for a, (u, v) in enumerate(affinity.edges_i):
        for b, (up, vp) in enumerate(affinity.edges_j):
            k = affinity.edge_k[a, b]
            for (s, t), (sp_, tp) in (((u, v), (up, vp)), ((v, u), (up, vp))):
                # edge s-t of graph i mapped onto edge sp_-tp of graph j, both directions
                Phi[s * n + sp_, t * n + tp] += k
                Phi[t * n + tp, s * n + sp_] += k
    return Phi


def brute_force_match(affinity: AffinityPair) -> tuple[PairAssignment, float]:
    """Exact maximizer of ``vec(X)' Phi vec(X)`` over all permutations of the padded size."""
    n = affinity.n
    if n > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX} nodes, got {n}")
    Phi = lawler_matrix(affinity)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    idx = np.arange(n)[None, :] * n + perms
    best_val, best = -np.inf, None
    for chunk in range(0, len(idx), 5040):
        ix = idx[chunk:chunk + 5040]
        vals = Phi[ix[:, :, None], ix[:, None, :]].sum(axis=(1, 2))
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best = float(vals[k]), perms[chunk + k]
    return PairAssignment(best.copy()), best_val


def match_pair(affinity: AffinityPair, real_sizes: tuple[int, int] | None = None,
               max_iters: int = 100, tol: float = 1e-6) -> tuple[PairAssignment, FWResult]:
    """Frank-Wolfe then projection; ``real_sizes=None`` keeps the full padded permutation."""
    fw = frank_wolfe_match(affinity, max_iters, tol)
    return project_permutation(fw.X, real_sizes), fw


@dataclass
class PairwiseRun:
    bulk: BulkAssignment
    objectives: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    seconds: float = 0.0
    meta: dict = field(default_factory=dict)


def pairwise_all(padded: PaddedPopulation, bw: KernelBandwidths, max_iters: int = 100,
                 tol: float = 1e-6, cache_dir=None, progress=None) -> PairwiseRun:
    """Solve every pair ``i < j``; ``X_ji`` is the transpose and ``X_ii = I``.

    Blocks are full permutations of the padded size: matches touching a dummy
    are kept so that multi-graph methods see complete blocks. Evaluation
    and labeling treat such matches as unmatched.
    """
    N, n = len(padded), padded.n_max
    if N < 2:
        raise ValueError("pairwise matching needs at least 2 graphs")
    bulk = BulkAssignment(N, n)
    cache = AffinityCache(cache_dir, padded, bw) if cache_dir else None
    run = PairwiseRun(bulk, meta={"solver": "frank-wolfe", "max_iters": max_iters, "tol": tol,
                                  "init": "barycenter", "gamma_v": bw.gamma_v, "gamma_e": bw.gamma_e})
    t0 = time.perf_counter()
    total = N * (N - 1) // 2
    done = 0
    for i in range(N):
        for j in range(i + 1, N):
            aff = cache.get(i, j) if cache else pair_affinity(padded[i], padded[j], bw, n)
            pa, fw = match_pair(aff, None, max_iters, tol)
            bulk.set_block(i, j, pa.match)
            run.objectives[(i, j)] = fw.trace[-1]
            run.iterations[(i, j)] = fw.iterations
            done += 1
            if progress:
                progress(done, total)
    run.seconds = time.perf_counter() - t0
    return run
