import math

import numpy as np
import pytest
from sklearn.metrics import silhouette_samples

from sulcal_match.assignment import BulkAssignment
from sulcal_match.evaluation import (CSV_COLUMNS, MatchScore, PopulationMismatchError, UNLABELED,
                                     UndefinedSilhouetteError, cluster_centroids, match_metrics,
                                     population_report, propagate_labels, read_metrics_csv,
                                     reference_graph, silhouette, write_metrics_csv)
from sulcal_match.graphs import GroundTruth, GraphPopulation, SulcalGraph
from sulcal_match.sphere import sample_uniform_sphere

from helpers import consistent_bulk


def test_hand_counted_example():
    # two graphs of three nodes; reference ids [0, 1, 2] and [1, 0, -1]
    truth = GroundTruth((np.array([0, 1, 2]), np.array([1, 0, -1])))
    b = BulkAssignment(2, 3)
    b.set_block(0, 1, np.array([1, 2, -1]))   # 0->1 correct, 1->2 outlier (FP), missed 1->0 (FN)
    s = match_metrics(b, truth)
    assert (s.tp, s.fp, s.fn) == (1, 1, 1)
    b.set_block(0, 1, np.array([1, 0, 2]))
    s = match_metrics(b, truth)
    assert (s.tp, s.fp, s.fn) == (2, 1, 0)
    assert s.precision == pytest.approx(2 / 3) and s.recall == 1.0 and s.f1 == pytest.approx(0.8)


def test_three_graph_counts():
    truth = GroundTruth((np.array([0, 1]), np.array([0, 1]), np.array([1, 0])))
    b = BulkAssignment(3, 2)
    b.set_block(0, 1, np.array([0, 1]))
    b.set_block(0, 2, np.array([0, 1]))  # both wrong
    b.set_block(1, 2, np.array([1, -1]))  # one right, one missed
    s = match_metrics(b, truth)
    assert (s.tp, s.fp, s.fn) == (3, 2, 3)


def test_empty_prediction():
    truth = GroundTruth((np.array([0, 1]), np.array([1, 0])))
    s = match_metrics(BulkAssignment(2, 2), truth)
    assert (s.tp, s.fp, s.fn) == (0, 0, 2)
    assert not s.precision_defined and s.f1 == 0.0


def test_dummy_matches_are_ignored():
    truth = GroundTruth((np.array([0]), np.array([0, 1])))
    b = BulkAssignment(2, 2)
    b.set_block(0, 1, np.array([0, 1]))  # row 1 of graph 0 is a dummy
    assert match_metrics(b, truth).fp == 0


def test_mismatched_truth():
    with pytest.raises(PopulationMismatchError):
        match_metrics(BulkAssignment(3, 2), GroundTruth((np.array([0, 1]),) * 2))


def test_from_counts_edge_cases():
    assert MatchScore.from_counts(0, 0, 0).f1 == 0.0
    assert MatchScore.from_counts(3, 0, 0).f1 == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_silhouette_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    pts = sample_uniform_sphere(300, rng)
    labels = rng.integers(0, 7, 300)
    labels[0] = 99  # a singleton
    ours = silhouette(labels, pts, chunk=64)
    assert np.allclose(ours, silhouette_samples(pts, labels), atol=1e-10)
    assert ours[0] == 0.0


def test_silhouette_of_antipodal_clusters():
    rng = np.random.default_rng(0)
    z = np.array([0.0, 0.0, 1.0])
    a = z + 0.02 * rng.standard_normal((50, 3))
    pts = np.vstack([a, -a])
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    s = silhouette(np.repeat([0, 1], 50), pts)
    assert s.mean() > 0.95


def test_unlabeled_points_use_nearest_cluster():
    pts = np.array([[0, 0, 1], [0, 0.1, 1], [0, 0, -1], [0, 0.1, -1], [0, 0.05, 1.0]], dtype=float)
    lab = np.array([0, 0, 1, 1, UNLABELED])
    s = silhouette(lab, pts)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    a, b = d[4, :2].mean(), d[4, 2:4].mean()
    assert s[4] == pytest.approx((b - a) / b)
    assert np.allclose(s[:4], silhouette_samples(pts[:4], lab[:4]))


def test_silhouette_needs_two_clusters():
    with pytest.raises(UndefinedSilhouetteError):
        silhouette(np.zeros(4, dtype=int), np.eye(3)[[0, 1, 2, 0]])


def test_reference_is_first_largest():
    assert reference_graph([3, 5, 5, 2]) == 1


def test_labels_on_consistent_bulk_do_not_depend_on_reference():
    b = consistent_bulk(5, 4, np.random.default_rng(0))
    parts = []
    for r in range(5):
        lab = propagate_labels(b, [4] * 5, reference=r).flat()
        # canonical form: cluster id = first index where it appears
        _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
        parts.append(first[inv])
    for p in parts[1:]:
        assert np.array_equal(p, parts[0])


def test_unmatched_reference_node_is_unlabeled():
    b = BulkAssignment(2, 3)
    b.set_block(0, 1, np.array([0, -1, 1]))
    lab = propagate_labels(b, [3, 3])
    assert list(lab.labels[0]) == [0, UNLABELED, 2]
    assert list(lab.labels[1]) == [0, 2, UNLABELED]


def _population(points_per_graph):
    return GraphPopulation([SulcalGraph.from_edges(f"g{q}", p, []) for q, p in enumerate(points_per_graph)])


def test_centroids_and_report():
    rng = np.random.default_rng(1)
    base = sample_uniform_sphere(4, rng)
    pts = [base, base[[2, 0, 3, 1]]]
    pop = _population(pts)
    b = BulkAssignment(2, 4)
    b.set_block(0, 1, np.array([1, 3, 0, 2]))
    cents = cluster_centroids(propagate_labels(b, pop.sizes), pop)
    for c, v in cents.items():
        assert np.allclose(v, base[c])
    rep = population_report(b, pop)
    assert rep.n_clusters == 4 and rep.unmatched_frac == 0.0 and rep.mean_consistency == 1.0
    assert rep.score is None and rep.metrics_row()["f1"] is None


def test_report_with_one_cluster_gives_nan(caplog):
    pop = _population([np.eye(3)[:1], np.eye(3)[:1]])
    b = BulkAssignment(2, 1)
    b.set_block(0, 1, np.array([0]))
    rep = population_report(b, pop)
    assert math.isnan(rep.mean_silhouette)
    assert any("silhouette undefined" in r.getMessage() for r in caplog.records)


def test_node_permutation_invariance():
    rng = np.random.default_rng(2)
    pts = [sample_uniform_sphere(5, rng) for _ in range(3)]
    truth = GroundTruth(tuple(rng.permutation(5) for _ in range(3)))
    b = BulkAssignment(3, 5)
    for i in range(3):
        for j in range(i + 1, 3):
            b.set_block(i, j, rng.permutation(5))
    s = match_metrics(b, truth)
    # relabel the nodes of graph 1
    pi = rng.permutation(5)        # new index of old node u is pi[u]
    inv = np.argsort(pi)
    b2 = BulkAssignment(3, 5)
    b2.set_block(0, 1, pi[b.perm[0, 1]])
    b2.set_block(1, 2, b.perm[1, 2][inv])
    b2.set_block(0, 2, b.perm[0, 2])
    t2 = GroundTruth((truth[0], truth[1][inv], truth[2]))
    assert match_metrics(b2, t2) == s
    r1 = population_report(b, _population(pts), truth)
    r2 = population_report(b2, _population([pts[0], pts[1][inv], pts[2]]), t2)
    assert r1.mean_silhouette == pytest.approx(r2.mean_silhouette)
    assert r1.mean_consistency == pytest.approx(r2.mean_consistency)


def test_metrics_csv_round_trip(tmp_path):
    row = dict(population_id="k100_r0", method="mals", kappa=100.0, repetition=0, precision=0.1 + 0.2,
               recall=None, f1=math.nan, n_clusters=7, unmatched_frac=0.25, mean_silhouette=-0.5,
               std_silhouette=0.0, mean_consistency=1.0, std_consistency=0.0, wall_seconds=1.5,
               config_hash="abc", version="0.1.0")
    path = tmp_path / "m.csv"
    write_metrics_csv([row], path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_metrics_csv(path)[0]
    assert back["precision"] == 0.1 + 0.2
    assert back["recall"] is None and back["f1"] is None
    assert back["n_clusters"] == 7 and back["method"] == "mals"
