"""Attributed spherical graphs, populations, ground truth and file I/O."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .sphere import check_unit, geodesic_distance, DomainError

LENGTH_TOL = 1e-9
OUTLIER = -1


class GraphFormatError(ValueError):
    """A population file that cannot be parsed or violates a graph invariant."""


@dataclass(frozen=True, eq=False)
class SulcalGraph:
    """Undirected graph with unit-sphere node coordinates and geodesic edge lengths.

    ``edges`` is an ``(e, 2)`` int array with ``u < v`` rows in lexicographic
    order; ``lengths[k]`` is the attribute of ``edges[k]``.
    """

    graph_id: str
    nodes: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, graph_id: str, nodes, edges, lengths=None, extra=None) -> "SulcalGraph":
        """Build a graph, computing geodesic lengths when ``lengths`` is None."""
        nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if lengths is None:
            if len(edges):
                _check_indices(graph_id, edges, len(nodes))
                lengths = geodesic_distance(nodes[edges[:, 0]], nodes[edges[:, 1]])
            else:
                lengths = np.zeros(0)
        lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
        g = cls(str(graph_id), nodes, edges, lengths, dict(extra or {}))
        g = g._canonical()
        g.validate()
        return g

    def _canonical(self) -> "SulcalGraph":
        if len(self.edges) == 0:
            return self
        e = np.sort(self.edges, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        return SulcalGraph(self.graph_id, self.nodes, e[order], self.lengths[order], self.extra)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate(self) -> None:
        gid = self.graph_id
        try:
            check_unit(self.nodes) if len(self.nodes) else None
        except DomainError as exc:
            raise GraphFormatError(f"graph {gid!r}: {exc}") from None
        if len(self.lengths) != len(self.edges):
            raise GraphFormatError(f"graph {gid!r}: {len(self.edges)} edges but {len(self.lengths)} lengths")
        if len(self.edges) == 0:
            return
        _check_indices(gid, self.edges, self.n_nodes)
        loops = np.flatnonzero(self.edges[:, 0] == self.edges[:, 1])
        if len(loops):
            raise GraphFormatError(f"graph {gid!r}: self-loop at node {self.edges[loops[0], 0]}")
        e = np.sort(self.edges, axis=1)
        _, first, counts = np.unique(e, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = e[first[np.argmax(counts > 1)]]
            raise GraphFormatError(f"graph {gid!r}: duplicate edge ({dup[0]}, {dup[1]})")
        expected = geodesic_distance(self.nodes[self.edges[:, 0]], self.nodes[self.edges[:, 1]])
        bad = np.flatnonzero(np.abs(np.atleast_1d(expected) - self.lengths) > LENGTH_TOL)
        if len(bad):
            k = bad[0]
            raise GraphFormatError(
                f"graph {gid!r}: edge ({self.edges[k, 0]}, {self.edges[k, 1]}) has length "
                f"{self.lengths[k]!r}, endpoints give {np.atleast_1d(expected)[k]!r}")

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        a[self.edges[:, 0], self.edges[:, 1]] = True
        a[self.edges[:, 1], self.edges[:, 0]] = True
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def same_as(self, other: "SulcalGraph") -> bool:
        return (self.graph_id == other.graph_id
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.lengths, other.lengths))


def _check_indices(gid, edges, n):
    bad = np.flatnonzero((edges < 0).any(axis=1) | (edges >= n).any(axis=1))
    if len(bad):
        u, v = edges[bad[0]]
        raise GraphFormatError(f"graph {gid!r}: edge ({u}, {v}) references a node outside [0, {n})")


@dataclass(frozen=True, eq=False)
class GraphPopulation:
    graphs: tuple[SulcalGraph, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, q: int) -> SulcalGraph:
        return self.graphs[q]

    def __iter__(self):
        return iter(self.graphs)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.n_nodes for g in self.graphs], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Reference-node identity for every node; ``OUTLIER`` (-1) marks outliers."""

    labels: tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = tuple(np.asarray(l, dtype=np.int64) for l in self.labels)
        object.__setattr__(self, "labels", labels)
        for q, lab in enumerate(labels):
            real = lab[lab != OUTLIER]
            if np.any(real < 0):
                raise GraphFormatError(f"ground truth of graph {q}: negative reference id")
            if len(np.unique(real)) != len(real):
                raise GraphFormatError(f"ground truth of graph {q}: repeated reference id")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, q: int) -> np.ndarray:
        return self.labels[q]

    def check_against(self, population: GraphPopulation) -> None:
        if len(self) != len(population):
            raise GraphFormatError(f"ground truth covers {len(self)} graphs, population has {len(population)}")
        for q, (lab, g) in enumerate(zip(self.labels, population)):
            if len(lab) != g.n_nodes:
                raise GraphFormatError(f"ground truth of graph {g.graph_id!r}: {len(lab)} entries for {g.n_nodes} nodes")


@dataclass(frozen=True, eq=False)
class PaddedPopulation:
    """Population viewed at a common size ``n_max``.

    Indices ``[n_q, n_max)`` of graph ``q`` are dummy nodes. Dummies have no
    coordinates: :meth:`padded_nodes` fills their rows with NaN so that any
    geometric use of them is poisoned rather than silently wrong.
    """

    population: GraphPopulation
    n_max: int
    real_sizes: np.ndarray

    def __len__(self) -> int:
        return len(self.population)

    def __getitem__(self, q: int) -> SulcalGraph:
        return self.population[q]

    def real_mask(self, q: int) -> np.ndarray:
        mask = np.zeros(self.n_max, dtype=bool)
        mask[: self.real_sizes[q]] = True
        return mask

    def padded_nodes(self, q: int) -> np.ndarray:
        out = np.full((self.n_max, 3), np.nan)
        g = self.population[q]
        out[: g.n_nodes] = g.nodes
        return out


def pad_with_dummies(population: GraphPopulation) -> PaddedPopulation:
    """Pad every graph with dummy nodes up to the largest graph size."""
    sizes = population.sizes
    n_max = int(sizes.max()) if len(sizes) else 0
    return PaddedPopulation(population, n_max, sizes)


def degree_distribution(graph: SulcalGraph) -> np.ndarray:
    """``hist[d]`` = number of nodes of degree ``d``."""
    return np.bincount(graph.degrees(), minlength=1)


def edge_length_distribution(graph: SulcalGraph, bins=None):
    """Geodesic edge lengths, one entry per edge.

    With ``bins`` given, returns ``numpy.histogram(lengths, bins)`` instead.
    """
    lengths = np.asarray(graph.lengths, dtype=float)
    if bins is None:
        return lengths
    return np.histogram(lengths, bins=bins)


def population_summary(population: GraphPopulation) -> dict[str, float]:
    """Node count, degree and edge-length statistics across a population."""
    sizes = population.sizes.astype(float)
    degrees = np.concatenate([g.degrees() for g in population]) if len(population) else np.zeros(0)
    lengths = np.concatenate([g.lengths for g in population]) if len(population) else np.zeros(0)
    return {
        "n_graphs": len(population),
        "nodes_mean": float(sizes.mean()),
        "nodes_std": float(sizes.std()),
        "nodes_max": int(sizes.max()),
        "degree_mean": float(degrees.mean()) if len(degrees) else 0.0,
        "edge_length_mean": float(lengths.mean()) if len(lengths) else 0.0,
        "edge_length_std": float(lengths.std()) if len(lengths) else 0.0,
    }


# -- serialization -----------------------------------------------------------

def _population_to_doc(population: GraphPopulation, truth: GroundTruth | None) -> dict[str, Any]:
    doc: dict[str, Any] = {"graphs": []}
    for g in population:
        entry = {
            "id": g.graph_id,
            "nodes": [[float(c) for c in p] for p in g.nodes],
            "edges": [[int(u), int(v), float(l)] for (u, v), l in zip(g.edges, g.lengths)],
        }
        if g.extra:
            entry["node_attributes"] = g.extra
        doc["graphs"].append(entry)
    if truth is not None:
        truth.check_against(population)
        doc["ground_truth"] = [[None if r == OUTLIER else int(r) for r in lab] for lab in truth.labels]
    if population.provenance:
        doc["provenance"] = population.provenance
    return doc


def save_population(population: GraphPopulation, truth: GroundTruth | None, path: str | os.PathLike) -> None:
    """Write a population as JSON.

    Floats are written with Python's shortest round-trip repr (up to 17
    significant digits) so reloading is value-identical.
    """
    doc = _population_to_doc(population, truth)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, allow_nan=False)
    os.replace(tmp, path)


def population_from_doc(doc: Any) -> tuple[GraphPopulation, GroundTruth | None]:
    if not isinstance(doc, dict) or not isinstance(doc.get("graphs"), list):
        raise GraphFormatError("population document must be an object with a 'graphs' list")
    graphs = []
    for k, entry in enumerate(doc["graphs"]):
        if not isinstance(entry, dict):
            raise GraphFormatError(f"graphs[{k}] is not an object")
        gid = entry.get("id", str(k))
        try:
            nodes = np.asarray(entry["nodes"], dtype=float).reshape(-1, 3)
            raw = entry.get("edges", [])
            edges = np.asarray([e[:2] for e in raw], dtype=np.int64).reshape(-1, 2)
            lengths = np.asarray([e[2] for e in raw], dtype=float)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise GraphFormatError(f"graph {gid!r}: malformed nodes/edges ({exc})") from None
        if np.any(edges != np.asarray([e[:2] for e in raw], dtype=float).reshape(-1, 2)):
            raise GraphFormatError(f"graph {gid!r}: non-integer edge endpoint")
        g = SulcalGraph(str(gid), nodes, edges, lengths, dict(entry.get("node_attributes", {})))
        g.validate()
        graphs.append(g._canonical())
    population = GraphPopulation(graphs, dict(doc.get("provenance", {})))
    truth = None
    if doc.get("ground_truth") is not None:
        gt = doc["ground_truth"]
        if not isinstance(gt, list):
            raise GraphFormatError("ground_truth must be a list")
        truth = GroundTruth([[OUTLIER if r is None else int(r) for r in lab] for lab in gt])
        truth.check_against(population)
    return population, truth


def load_population(path: str | os.PathLike) -> tuple[GraphPopulation, GroundTruth | None]:
    """Read and validate a population file written by :func:`save_population`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: not valid JSON ({exc})") from None
    return population_from_doc(doc)


def edges_connected(n_nodes: int, edges: Sequence[Sequence[int]]) -> bool:
    """True when the graph on ``n_nodes`` with ``edges`` is connected."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if n_nodes <= 1:
        return True
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    a = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n_nodes, n_nodes))
    ncomp, _ = connected_components(a, directed=False)
    return ncomp == 1
