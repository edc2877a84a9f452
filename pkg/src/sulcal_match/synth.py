"""Synthetic populations of sulcal-like graphs with known correspondences.

Pipeline per population:

1. a shared reference set of ``n_ref`` points, the best of ``trials`` uniform
   draws under the max-min geodesic criterion;
2. for each graph, a vMF perturbation of every reference node;
3. ``n_s`` perturbed nodes suppressed and ``n_o`` uniform outliers added, both
   counts beta-binomial;
4. edges from the 3D convex hull, then a fraction ``p`` of edges deleted
   without disconnecting the graph.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graphs import GraphPopulation, GroundTruth, SulcalGraph, OUTLIER
from .sphere import (DomainError, RngStream, _rng, geodesic_distance,
                     sample_uniform_sphere, sample_vmf_each)

log = logging.getLogger(__name__)


class GeometryError(RuntimeError):
    """Convex hull could not be built from the given points."""


@dataclass(frozen=True)
class GenerationParams:
    """Inputs of the generator.

    ``sigma_pert`` is a standard deviation; it is squared before being turned
    into beta-binomial shape parameters. ``mu_pert = 0`` switches outliers and
    suppression off entirely.
    """

    n_graphs: int = 137
    n_ref: int = 88
    kappa: float = 200.0
    mu_pert: float = 12.0
    sigma_pert: float = 4.0
    p: float = 0.10
    nu: int = 30
    trials: int = 10_000
    seed: int = 0
    shuffle_nodes: bool = True

    def __post_init__(self):
        if self.n_graphs < 1 or self.n_ref < 4:
            raise DomainError("need n_graphs >= 1 and n_ref >= 4")
        if not self.kappa > 0:
            raise DomainError("kappa must be > 0")
        if not 0 <= self.p < 1:
            raise DomainError("edge deletion fraction p must lie in [0, 1)")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.mu_pert != 0 and not 0 < self.mu_pert < self.nu:
            raise DomainError(f"mu_pert must lie in (0, nu={self.nu}), got {self.mu_pert}")
        if self.mu_pert != 0 and self.sigma_pert <= 0:
            raise DomainError("sigma_pert must be > 0")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReferenceSet:
    points: np.ndarray
    min_distance: float


# -- reference nodes ---------------------------------------------------------

def _min_geodesic(points: np.ndarray) -> float:
    gram = points @ points.T
    np.fill_diagonal(gram, -np.inf)
    i, j = np.unravel_index(np.argmax(gram), gram.shape)
    return float(geodesic_distance(points[i], points[j]))


def make_reference_set(n_ref: int, trials: int, rng, chunk: int = 500) -> ReferenceSet:
    """Best of ``trials`` uniform samplings under the max-min geodesic criterion.

    Draws are taken in order from one generator, so ``trials=1`` returns
    exactly ``sample_uniform_sphere(n_ref, rng)``.
    """
    if n_ref < 2 or trials < 1:
        raise DomainError("need n_ref >= 2 and trials >= 1")
    gen = _rng(rng)
    best, best_dot = None, np.inf
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        raw = gen.standard_normal((k, n_ref, 3))
        pts = raw / np.linalg.norm(raw, axis=2, keepdims=True)
        gram = np.einsum("tik,tjk->tij", pts, pts)
        idx = np.arange(n_ref)
        gram[:, idx, idx] = -np.inf
        # max off-diagonal dot product <-> min geodesic distance
        worst = gram.reshape(k, -1).max(axis=1)
        t = int(np.argmin(worst))
        if worst[t] < best_dot:
            best_dot, best = worst[t], pts[t].copy()
        done += k
    return ReferenceSet(best, _min_geodesic(best))


# -- beta-binomial counts ----------------------------------------------------

def beta_binomial_feasible_variance(nu: int, mu: float) -> tuple[float, float]:
    """Open interval of variances reachable by B(nu, a, b) with mean ``mu``."""
    p = mu / nu
    return nu * p * (1 - p), nu * nu * p * (1 - p)


def beta_binomial_params(nu: int, mu: float, var: float) -> tuple[float, float]:
    """Shape parameters ``(alpha, beta)`` of B(nu, alpha, beta) with given mean and variance.

    With ``rho = (nu - mu) / mu`` the mean constraint forces
    ``beta = rho * alpha``; solving the variance equation for alpha gives::

        alpha = ((1 + rho)^2 var - nu^2 rho) / (nu rho (1 + rho) - var (1 + rho)^3)
    """
    if not 0 < mu < nu:
        raise DomainError(f"mean must lie in (0, {nu}), got {mu}")
    lo, hi = beta_binomial_feasible_variance(nu, mu)
    if not lo < var < hi:
        raise DomainError(
            f"variance {var} infeasible for B({nu}, a, b) with mean {mu}; "
            f"feasible interval is ({lo:.6g}, {hi:.6g})")
    rho = (nu - mu) / mu
    alpha = ((1 + rho) ** 2 * var - nu ** 2 * rho) / (nu * rho * (1 + rho) - var * (1 + rho) ** 3)
    return float(alpha), float(rho * alpha)


def beta_binomial_moments(nu: int, alpha: float, beta: float) -> tuple[float, float]:
    s = alpha + beta
    mean = nu * alpha / s
    var = nu * alpha * beta * (s + nu) / (s * s * (s + 1))
    return mean, var


def sample_beta_binomial(nu: int, alpha: float, beta: float, rng, size=None):
    """Draw ``q ~ Beta(alpha, beta)`` then ``Binomial(nu, q)``."""
    if not (alpha > 0 and beta > 0):
        raise DomainError("alpha and beta must be > 0")
    gen = _rng(rng)
    q = gen.beta(alpha, beta, size)
    out = gen.binomial(nu, q)
    return int(out) if size is None else out


@dataclass(frozen=True)
class CountModel:
    """Distribution of outlier / suppression counts.

    ``alpha is None`` means the binomial limit (alpha, beta -> infinity);
    ``off`` means counts are always zero.
    """

    nu: int
    mean: float
    alpha: float | None = None
    beta: float | None = None
    off: bool = False

    @classmethod
    def from_params(cls, params: GenerationParams) -> "CountModel":
        if params.mu_pert == 0:
            return cls(params.nu, 0.0, off=True)
        var = float(params.sigma_pert) ** 2
        lo, _ = beta_binomial_feasible_variance(params.nu, params.mu_pert)
        if var <= lo:
            log.warning("count variance %.4g is below the binomial floor %.4g for nu=%d, mu=%.4g; "
                        "using Binomial(nu, mu/nu)", var, lo, params.nu, params.mu_pert)
            return cls(params.nu, params.mu_pert)
        a, b = beta_binomial_params(params.nu, params.mu_pert, var)
        return cls(params.nu, params.mu_pert, a, b)

    def draw(self, gen: np.random.Generator) -> int:
        if self.off:
            return 0
        if self.alpha is None:
            return int(gen.binomial(self.nu, self.mean / self.nu))
        return sample_beta_binomial(self.nu, self.alpha, self.beta, gen)

    def describe(self) -> dict:
        if self.off:
            return {"model": "off"}
        if self.alpha is None:
            return {"model": "binomial", "nu": self.nu, "p": self.mean / self.nu}
        return {"model": "beta-binomial", "nu": self.nu, "alpha": self.alpha, "beta": self.beta}


# -- per-graph perturbations -------------------------------------------------

def perturb_nodes(ref: ReferenceSet, kappa: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """vMF-perturb each reference node; returns ``(points, reference_ids)``."""
    pts = sample_vmf_each(ref.points, kappa, rng)
    return pts, np.arange(len(ref.points), dtype=np.int64)


def apply_outliers_and_suppression(points: np.ndarray, ids: np.ndarray, counts: CountModel,
                                   rng) -> tuple[np.ndarray, np.ndarray, dict]:
    """Suppress ``n_s`` tagged nodes, then append ``n_o`` uniform outliers.

    Returns ``(points, ids, info)`` where outliers carry id ``OUTLIER`` and
    ``info`` records the drawn and applied counts.
    """
    gen = _rng(rng)
    n_o = counts.draw(gen)
    n_s = counts.draw(gen)
    n = len(points)
    limit = max(0, n + n_o - 4)
    applied = min(n_s, limit, n)
    if applied < n_s:
        log.info("suppression count clamped from %d to %d to keep >= 4 nodes", n_s, applied)
    keep = np.sort(gen.choice(n, size=n - applied, replace=False)) if applied else np.arange(n)
    pts, tags = points[keep], ids[keep]
    if n_o:
        pts = np.vstack([pts, sample_uniform_sphere(n_o, gen)])
        tags = np.concatenate([tags, np.full(n_o, OUTLIER, dtype=np.int64)])
    return pts, tags, {"n_o": int(n_o), "n_s_drawn": int(n_s), "n_s": int(applied)}


def hull_edges(points: np.ndarray) -> np.ndarray:
    """Unique edges of the triangulated convex hull, as sorted ``(u, v)`` rows."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        raise GeometryError(f"convex hull needs >= 4 points, got {len(pts)}")
    try:
        hull = ConvexHull(pts)
        if len(hull.vertices) < len(pts):
            # near-duplicate points are dropped from the hull; joggle to keep all
            hull = ConvexHull(pts, qhull_options="QJ")
    except QhullError as exc:
        raise GeometryError(f"degenerate hull: {exc}") from None
    if len(hull.vertices) < len(pts):
        raise GeometryError("some points are not hull vertices")
    tri = hull.simplices
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    return e


def _connected(n: int, edges: np.ndarray, alive: np.ndarray) -> bool:
    e = edges[alive]
    a = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return connected_components(a, directed=False)[0] == 1


def build_edges(points: np.ndarray, p: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Hull triangulation with ``floor(p * |E|)`` connectivity-preserving deletions.

    Returns ``(edges, lengths)``.
    """
    gen = _rng(rng)
    edges = hull_edges(points)
    n = len(points)
    n_del = int(math.floor(p * len(edges)))
    alive = np.ones(len(edges), dtype=bool)
    removed = skipped = 0
    # edges skipped as bridges stay bridges, so walking a random order picks
    # each deletion uniformly among the currently removable edges
    for k in gen.permutation(len(edges)):
        if removed == n_del:
            break
        alive[k] = False
        if _connected(n, edges, alive):
            removed += 1
        else:
            alive[k] = True
            skipped += 1
    if removed < n_del:
        raise GeometryError(f"only {removed} of {n_del} edges removable without disconnecting")
    if skipped:
        log.debug("edge deletion redrew %d cut edges", skipped)
    kept = edges[alive]
    lengths = np.atleast_1d(geodesic_distance(points[kept[:, 0]], points[kept[:, 1]]))
    return kept, lengths


# -- population --------------------------------------------------------------

def generate_graph(index: int, ref: ReferenceSet, params: GenerationParams,
                   counts: CountModel) -> tuple[SulcalGraph, np.ndarray, dict]:
    gen = RngStream(params.seed, 1).child(index).generator()
    pts, ids = perturb_nodes(ref, params.kappa, gen)
    pts, ids, info = apply_outliers_and_suppression(pts, ids, counts, gen)
    if params.shuffle_nodes:
        order = gen.permutation(len(pts))
        pts, ids = pts[order], ids[order]
    edges, lengths = build_edges(pts, params.p, gen)
    g = SulcalGraph.from_edges(f"g{index:04d}", pts, edges, lengths)
    return g, ids, info


def generate_population(params: GenerationParams,
                        reference: ReferenceSet | None = None) -> tuple[GraphPopulation, GroundTruth]:
    """Generate ``params.n_graphs`` graphs around one shared reference set.

    Graph ``q`` draws from its own stream derived from ``(seed, q)``, so the
    output does not depend on generation order.
    """
    if reference is None:
        reference = make_reference_set(params.n_ref, params.trials, RngStream(params.seed, 0))
    counts = CountModel.from_params(params)
    graphs, labels, infos = [], [], []
    for q in range(params.n_graphs):
        g, ids, info = generate_graph(q, reference, params, counts)
        graphs.append(g)
        labels.append(ids)
        infos.append(info)
    provenance = {
        "generator": "synthetic",
        "params": params.as_dict(),
        "counts": counts.describe(),
        "reference_min_distance": reference.min_distance,
        "perturbation_counts": infos,
    }
    return GraphPopulation(graphs, provenance), GroundTruth(labels)
