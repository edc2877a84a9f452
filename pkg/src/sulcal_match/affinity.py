"""Gaussian-kernel node and edge affinities between graph pairs.

Node kernel: ``exp(-gamma_v * |x_u - x_v|^2)`` on 3D (chordal) coordinates.
Edge kernel: ``exp(-gamma_e * (l_e - l_f)^2)`` on geodesic edge lengths.
Both bandwidths come from the median heuristic over cross-graph pairs.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graphs import GraphPopulation, PaddedPopulation, SulcalGraph
from .sphere import RngStream

MAX_MEDIAN_PAIRS = 1_000_000


class DegenerateBandwidthError(ValueError):
    """The median squared attribute difference is zero."""


@dataclass(frozen=True)
class KernelBandwidths:
    gamma_v: float
    gamma_e: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.gamma_v > 0 and self.gamma_e > 0):
            raise DegenerateBandwidthError(f"bandwidths must be > 0, got {self.gamma_v}, {self.gamma_e}")


def graph_digest(g: SulcalGraph) -> str:
    h = hashlib.sha256()
    for arr in (g.nodes, g.edges, g.lengths):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def population_hash(population: GraphPopulation) -> str:
    h = hashlib.sha256()
    for g in population:
        h.update(graph_digest(g).encode())
    return h.hexdigest()[:16]


def _cross_sq_diffs(groups: list[np.ndarray], max_pairs: int, rng) -> tuple[np.ndarray, bool]:
    """Squared differences over all cross-group pairs, or a uniform subsample.

    ``groups[k]`` is an ``(n_k, d)`` array of attributes of graph ``k``.
    """
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    total = (sizes.sum() ** 2 - (sizes ** 2).sum()) // 2
    if total <= max_pairs:
        out = []
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if len(groups[i]) and len(groups[j]):
                    d = groups[i][:, None, :] - groups[j][None, :, :]
                    out.append(np.sum(d * d, axis=-1).ravel())
        return (np.concatenate(out) if out else np.zeros(0)), True
    pooled = np.concatenate(groups)
    owner = np.repeat(np.arange(len(groups)), sizes)
    gen = rng.generator()
    picked = []
    need = max_pairs
    while need > 0:
        a = gen.integers(0, len(pooled), 2 * need)
        b = gen.integers(0, len(pooled), 2 * need)
        ok = owner[a] != owner[b]
        a, b = a[ok][:need], b[ok][:need]
        d = pooled[a] - pooled[b]
        picked.append(np.sum(d * d, axis=-1))
        need -= len(a)
    return np.concatenate(picked), False


def estimate_bandwidths(population: PaddedPopulation | GraphPopulation,
                        max_pairs: int = MAX_MEDIAN_PAIRS, seed: int = 0) -> KernelBandwidths:
    """Median heuristic: ``gamma = 1 / median`` of cross-graph squared differences.

    Node and edge attributes are handled independently. When a pair count
    exceeds ``max_pairs`` a uniform subsample of that size is used; graphs
    are put in a content-derived order first so the result does not depend
    on how the population is ordered.
    """
    pop = population.population if isinstance(population, PaddedPopulation) else population
    if len(pop) < 2:
        raise ValueError("bandwidth estimation needs at least 2 graphs")
    graphs = sorted(pop, key=graph_digest)
    nodes = [g.nodes for g in graphs]
    lengths = [g.lengths[:, None] for g in graphs]
    rng = RngStream(seed, 7)
    dv, exact_v = _cross_sq_diffs(nodes, max_pairs, rng.child(0))
    de, exact_e = _cross_sq_diffs(lengths, max_pairs, rng.child(1))
    if len(dv) == 0 or len(de) == 0:
        raise DegenerateBandwidthError("no cross-graph node or edge pairs")
    mv, me = float(np.median(dv)), float(np.median(de))
    if mv <= 0 or me <= 0:
        raise DegenerateBandwidthError(f"median squared difference is zero (nodes {mv}, edges {me})")
    meta = {"median_node_sq": mv, "median_edge_sq": me, "node_pairs": int(len(dv)),
            "edge_pairs": int(len(de)), "node_exact": exact_v, "edge_exact": exact_e,
            "subsample_limit": max_pairs, "subsample_seed": seed}
    return KernelBandwidths(1.0 / mv, 1.0 / me, meta)


def node_affinity(gi: SulcalGraph, gj: SulcalGraph, gamma_v: float, n_max: int | None = None) -> np.ndarray:
    """``psi[u, v] = exp(-gamma_v |x_u - x_v|^2)``; dummy rows/columns are 0."""
    n = max(gi.n_nodes, gj.n_nodes) if n_max is None else n_max
    psi = np.zeros((n, n))
    d = gi.nodes[:, None, :] - gj.nodes[None, :, :]
    psi[: gi.n_nodes, : gj.n_nodes] = np.exp(-gamma_v * np.sum(d * d, axis=-1))
    return psi


def edge_affinity_sparse(gi: SulcalGraph, gj: SulcalGraph, gamma_e: float) -> np.ndarray:
    """Edge-pair kernel, shape ``(e_i, e_j)``: entry ``[a, b]`` compares edge a of gi with edge b of gj.

    This is the whole support of the quadratic term; no ``n^2 x n^2``
    matrix is formed.
    """
    diff = gi.lengths[:, None] - gj.lengths[None, :]
    return np.exp(-gamma_e * diff * diff)


@dataclass(frozen=True, eq=False)
class AffinityPair:
    """Affinities between graphs i and j at padded size ``n``.

    ``edges_i``/``edges_j`` are the ``(u, v)`` rows of each graph and
    ``edge_k[a, b]`` the kernel between ``edges_i[a]`` and ``edges_j[b]``.
    """

    psi: np.ndarray
    edges_i: np.ndarray
    edges_j: np.ndarray
    edge_k: np.ndarray

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    def transpose(self) -> "AffinityPair":
        return AffinityPair(self.psi.T.copy(), self.edges_j, self.edges_i, self.edge_k.T.copy())

    def quadratic_operator(self) -> sp.csr_matrix:
        """Sparse symmetric ``W`` over row-major ``vec(X)`` (index ``u * n + u'``).

        Every edge pair ``(u, v) ~ (u', v')`` with kernel ``k`` puts ``k`` at
        ``[(u,u'), (v,v')]``, ``[(v,v'), (u,u')]``, ``[(u,v'), (v,u')]`` and
        ``[(v,u'), (u,v')]``. For a binary ``X``, ``vec(X)' W vec(X)`` is the
        edge part of the Lawler objective, so each preserved edge counts twice.
        """
        n = self.n
        ei, ej = self.edges_i, self.edges_j
        if len(ei) == 0 or len(ej) == 0:
            return sp.csr_matrix((n * n, n * n))
        u = np.repeat(ei[:, 0], len(ej))
        v = np.repeat(ei[:, 1], len(ej))
        up = np.tile(ej[:, 0], len(ei))
        vp = np.tile(ej[:, 1], len(ei))
        k = self.edge_k.ravel()
        rows = np.concatenate([u * n + up, v * n + vp, u * n + vp, v * n + up])
        cols = np.concatenate([v * n + vp, u * n + up, v * n + up, u * n + vp])
        vals = np.concatenate([k, k, k, k])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))


def pair_affinity(gi: SulcalGraph, gj: SulcalGraph, bw: KernelBandwidths, n_max: int) -> AffinityPair:
    return AffinityPair(node_affinity(gi, gj, bw.gamma_v, n_max), gi.edges, gj.edges,
                        edge_affinity_sparse(gi, gj, bw.gamma_e))


class AffinityCache:
    """On-disk store of pair affinities keyed by population hash, pair and bandwidths."""

    def __init__(self, directory: str | os.PathLike, population: PaddedPopulation, bw: KernelBandwidths):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.padded = population
        self.bw = bw
        self.key = f"{population_hash(population.population)}_{bw.gamma_v:.12g}_{bw.gamma_e:.12g}"

    def _path(self, i: int, j: int) -> Path:
        return self.dir / f"{self.key}_{i}_{j}.npz"

    def get(self, i: int, j: int) -> AffinityPair:
        path = self._path(i, j)
        if path.exists():
            with np.load(path) as z:
                return AffinityPair(z["psi"], z["edges_i"], z["edges_j"], z["edge_k"])
        aff = pair_affinity(self.padded[i], self.padded[j], self.bw, self.padded.n_max)
        tmp = path.with_name(path.stem + ".tmp.npz")
        np.savez(tmp, psi=aff.psi, edges_i=aff.edges_i, edges_j=aff.edges_j, edge_k=aff.edge_k)
        os.replace(tmp, path)
        return aff
