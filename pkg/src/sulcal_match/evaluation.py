"""Scoring of bulk assignments: ground-truth metrics, label propagation, clusters.

Counting unit for precision/recall is the cross-graph node pair over every
graph pair ``i < j``. Clusters come from propagating the node indices of the
largest graph through its assignment blocks.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import BulkAssignment
from .graphs import GraphPopulation, GroundTruth, OUTLIER
from .multigraph.consistency import node_consistency
from .sphere import spherical_centroid

log = logging.getLogger(__name__)

UNLABELED = -1


class UndefinedSilhouetteError(ValueError):
    """Silhouettes need at least two clusters."""


class PopulationMismatchError(ValueError):
    pass


# -- precision / recall ------------------------------------------------------

@dataclass(frozen=True)
class MatchScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "MatchScore":
        defined = tp + fp > 0
        p = tp / (tp + fp) if defined else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(int(tp), int(fp), int(fn), p, r, f1, defined)


def _real_sizes(bulk: BulkAssignment, truth: GroundTruth) -> np.ndarray:
    if len(truth) != bulk.N:
        raise PopulationMismatchError(f"ground truth covers {len(truth)} graphs, bulk has {bulk.N}")
    sizes = np.array([len(l) for l in truth.labels], dtype=np.int64)
    if np.any(sizes > bulk.n):
        raise PopulationMismatchError(f"ground truth has a graph of {sizes.max()} nodes, bulk is padded to {bulk.n}")
    return sizes


def match_metrics(bulk: BulkAssignment, truth: GroundTruth) -> MatchScore:
    """Precision, recall and F1 of the real-real matches of ``bulk``.

    A predicted match counts as a true positive when both nodes carry the
    same reference id; any other real-real match (an outlier on either side
    or differing ids) is a false positive. Ground-truth pairs that are not
    predicted are false negatives. Matches involving a dummy are ignored.
    """
    sizes = _real_sizes(bulk, truth)
    tp = fp = n_true = 0
    for i in range(bulk.N):
        li = truth[i]
        for j in range(i + 1, bulk.N):
            lj = truth[j]
            row = bulk.perm[i, j, : sizes[i]]
            u = np.flatnonzero((row >= 0) & (row < sizes[j]))
            a, b = li[u], lj[row[u]]
            hit = int(np.sum((a == b) & (a != OUTLIER)))
            tp += hit
            fp += len(u) - hit
            n_true += len(np.intersect1d(li[li != OUTLIER], lj[lj != OUTLIER], assume_unique=True))
    return MatchScore.from_counts(tp, fp, n_true - tp)


# -- labels and clusters -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Labeling:
    """Per graph, per real node: the reference node index it is matched to, or ``UNLABELED``."""

    labels: tuple[np.ndarray, ...]
    reference: int

    def __len__(self) -> int:
        return len(self.labels)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.labels) if self.labels else np.zeros(0, dtype=np.int64)

    def cluster_labels(self) -> np.ndarray:
        lab = self.flat()
        return np.unique(lab[lab != UNLABELED])


def reference_graph(sizes) -> int:
    """Index of a largest graph; ties go to the smallest index."""
    return int(np.argmax(np.asarray(sizes)))


def propagate_labels(bulk: BulkAssignment, sizes, reference: int | None = None) -> Labeling:
    """Label every real node by the reference node matched to it.

    Reference node ``r`` labels itself only if it is matched to at least one
    real node elsewhere; a reference node matched nowhere is left unlabeled,
    so every surviving label forms a cluster of two or more nodes.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    ref = reference_graph(sizes) if reference is None else int(reference)
    n_ref = sizes[ref]
    labels = []
    seen = np.zeros(n_ref, dtype=bool)
    for q in range(bulk.N):
        lab = np.full(sizes[q], UNLABELED, dtype=np.int64)
        if q != ref:
            row = bulk.perm[ref, q, :n_ref]
            r = np.flatnonzero((row >= 0) & (row < sizes[q]))
            lab[row[r]] = r
            seen[r] = True
        labels.append(lab)
    own = np.full(n_ref, UNLABELED, dtype=np.int64)
    own[seen] = np.flatnonzero(seen)
    if bulk.N == 1:
        own = np.arange(n_ref)
    labels[ref] = own
    return Labeling(tuple(labels), ref)


def _stack_nodes(population: GraphPopulation) -> np.ndarray:
    return np.concatenate([g.nodes for g in population]) if len(population) else np.zeros((0, 3))


def silhouette(labels: np.ndarray, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Per-point silhouette with chordal (3D Euclidean) distances.

    ``labels`` uses ``UNLABELED`` for points outside every cluster. A
    clustered point gets ``(b - a) / max(a, b)`` with ``a`` its mean distance
    to the rest of its cluster and ``b`` the smallest mean distance to another
    cluster; a singleton gets 0. An unlabeled point is scored as if it
    belonged to its nearest cluster: ``a`` is the mean distance to that
    cluster and ``b`` to the second nearest.
    """
    labels = np.asarray(labels)
    points = np.asarray(points, dtype=float)
    uniq, inv = np.unique(labels[labels != UNLABELED], return_inverse=True)
    if len(uniq) < 2:
        raise UndefinedSilhouetteError(f"silhouette needs >= 2 clusters, got {len(uniq)}")
    member = np.flatnonzero(labels != UNLABELED)
    cl = np.full(len(labels), -1, dtype=np.int64)
    cl[member] = inv
    L = len(uniq)
    size = np.bincount(inv, minlength=L).astype(float)
    onehot = np.zeros((len(labels), L))
    onehot[member, inv] = 1.0
    out = np.zeros(len(labels))
    sq = np.sum(points * points, axis=1)
    for s in range(0, len(labels), chunk):
        blk = slice(s, min(s + chunk, len(labels)))
        d2 = sq[blk, None] + sq[None, :] - 2.0 * points[blk] @ points.T
        D = np.sqrt(np.maximum(d2, 0.0))
        sums = D @ onehot                                   # (rows, L)
        c = cl[blk]
        own = c >= 0
        denom = size[None, :].repeat(len(c), axis=0)
        rows = np.flatnonzero(own)
        denom[rows, c[rows]] -= 1.0                         # exclude the point itself
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(denom > 0, sums / denom, np.inf)
        a = np.empty(len(c))
        b = np.empty(len(c))
        a[own] = mean[rows, c[rows]]
        other = mean[rows].copy()
        other[np.arange(len(rows)), c[rows]] = np.inf
        b[own] = other.min(axis=1)
        free = np.flatnonzero(~own)
        if len(free):
            two = np.sort(mean[free], axis=1)[:, :2]
            a[free], b[free] = two[:, 0], two[:, 1]
        singleton = own.copy()
        singleton[rows] = size[c[rows]] <= 1
        with np.errstate(divide="ignore", invalid="ignore"):
            sv = (b - a) / np.maximum(a, b)
        sv[singleton] = 0.0
        sv[np.maximum(a, b) == 0] = 0.0
        out[blk] = sv
    return out


def cluster_centroids(labeling: Labeling, population: GraphPopulation) -> dict[int, np.ndarray]:
    """Spherical centroid of the member coordinates of every cluster."""
    lab = labeling.flat()
    pts = _stack_nodes(population)
    return {int(c): spherical_centroid(pts[lab == c]) for c in labeling.cluster_labels()}


# -- reports -----------------------------------------------------------------

METRIC_COLUMNS = ["precision", "recall", "f1", "n_clusters", "unmatched_frac", "mean_silhouette",
                  "std_silhouette", "mean_consistency", "std_consistency", "wall_seconds"]
KEY_COLUMNS = ["population_id", "method", "kappa", "repetition"]
TRAILER_COLUMNS = ["config_hash", "version"]
CSV_COLUMNS = KEY_COLUMNS + METRIC_COLUMNS + TRAILER_COLUMNS
TIMING_COLUMNS = ("wall_seconds",)
DETAIL_COLUMNS = ["graph_id", "node_id", "label", "silhouette", "consistency", "in_cluster"]


@dataclass
class ClusterReport:
    n_clusters: int
    unmatched_frac: float
    mean_silhouette: float
    std_silhouette: float
    mean_consistency: float
    std_consistency: float
    wall_seconds: float = math.nan
    score: MatchScore | None = None
    clusters: list[dict] = field(default_factory=list)
    node_silhouette: np.ndarray | None = field(default=None, repr=False)
    node_consistency: np.ndarray | None = field(default=None, repr=False)
    labeling: Labeling | None = field(default=None, repr=False)

    def metrics_row(self) -> dict:
        s = self.score
        return {
            "precision": s.precision if s else None,
            "recall": s.recall if s else None,
            "f1": s.f1 if s else None,
            "n_clusters": self.n_clusters,
            "unmatched_frac": self.unmatched_frac,
            "mean_silhouette": self.mean_silhouette,
            "std_silhouette": self.std_silhouette,
            "mean_consistency": self.mean_consistency,
            "std_consistency": self.std_consistency,
            "wall_seconds": self.wall_seconds,
        }


def population_report(bulk: BulkAssignment, population: GraphPopulation,
                      truth: GroundTruth | None = None, labeling: Labeling | None = None,
                      wall_seconds: float = math.nan) -> ClusterReport:
    """Cluster, silhouette, unmatched and consistency summary of one bulk.

    ``unmatched_frac`` is the share of real nodes left unlabeled. Silhouette
    statistics average over clustered nodes only; with fewer than two
    clusters they are NaN and a warning is logged.
    """
    sizes = population.sizes
    if bulk.N != len(population) or (len(sizes) and sizes.max() > bulk.n):
        raise PopulationMismatchError(f"bulk ({bulk.N} graphs, n={bulk.n}) does not fit the population")
    labeling = propagate_labels(bulk, sizes) if labeling is None else labeling
    lab = labeling.flat()
    pts = _stack_nodes(population)
    in_cluster = lab != UNLABELED
    clusters = labeling.cluster_labels()
    cons_all = node_consistency(bulk)
    cons = np.concatenate([cons_all[q, : sizes[q]] for q in range(bulk.N)])
    try:
        sil = silhouette(lab, pts)
        ms, ss = float(sil[in_cluster].mean()), float(sil[in_cluster].std())
    except UndefinedSilhouetteError as exc:
        log.warning("silhouette undefined: %s", exc)
        sil = np.full(len(lab), np.nan)
        ms = ss = math.nan
    per_cluster = []
    for c in clusters:
        sel = lab == c
        per_cluster.append({
            "label": int(c), "size": int(sel.sum()),
            "centroid": spherical_centroid(pts[sel]).tolist(),
            "mean_silhouette": float(np.mean(sil[sel])),
            "mean_consistency": float(np.mean(cons[sel])),
        })
    return ClusterReport(
        n_clusters=len(clusters),
        unmatched_frac=float(np.mean(~in_cluster)) if len(lab) else 0.0,
        mean_silhouette=ms, std_silhouette=ss,
        mean_consistency=float(cons.mean()), std_consistency=float(cons.std()),
        wall_seconds=float(wall_seconds),
        score=match_metrics(bulk, truth) if truth is not None else None,
        clusters=per_cluster, node_silhouette=sil, node_consistency=cons, labeling=labeling)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(rows: list[dict], path: str | os.PathLike) -> None:
    """Write metric rows with the fixed column order; missing values are empty cells."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    os.replace(tmp, path)


def _parse(v: str):
    if v == "":
        return None
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_metrics_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        return [{c: (v if c in ("population_id", "method", "config_hash", "version") else _parse(v))
                 for c, v in zip(CSV_COLUMNS, row)} for row in reader if row]


def write_node_detail(report: ClusterReport, population: GraphPopulation, path: str | os.PathLike,
                      stamp: dict | None = None) -> None:
    """One row per real node. ``in_cluster`` tells which nodes enter the silhouette means.

    ``stamp`` (e.g. config hash and version) is appended as constant trailing columns.
    """
    lab = report.labeling.flat()
    stamp = stamp or {}
    tail = [str(v) for v in stamp.values()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETAIL_COLUMNS + list(stamp))
        k = 0
        for g in population:
            for u in range(g.n_nodes):
                w.writerow([g.graph_id, u, "" if lab[k] == UNLABELED else int(lab[k]),
                            _fmt(float(report.node_silhouette[k])), _fmt(float(report.node_consistency[k])),
                            int(lab[k] != UNLABELED), *tail])
                k += 1
