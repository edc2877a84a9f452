import numpy as np
import pytest

from sulcal_match.assignment import BulkAssignment
from sulcal_match.multigraph import graph_consistency, mean_graph_consistency, node_consistency

from helpers import consistent_bulk, dense_blocks, random_bulk


def dense_graph_consistency(q, bulk):
    X = dense_blocks(bulk)
    N, n = bulk.N, bulk.n
    s = sum(np.linalg.norm(X[i][j] - X[i][q] @ X[q][j]) / 2 for i in range(N) for j in range(i + 1, N))
    return 1 - s / (n * N * (N - 1) / 2)


def dense_node_consistency(bulk):
    X = dense_blocks(bulk)
    N, n = bulk.N, bulk.n
    out = np.zeros((N, n))
    for k in range(N):
        for v in range(n):
            s = 0.0
            for i in range(N):
                for j in range(i + 1, N):
                    Y = X[k][j] - X[k][i] @ X[i][j]
                    s += np.linalg.norm(Y[v]) / 2
            out[k, v] = 1 - s / (N * (N - 1) / 2)
    return out


def toy():
    b = BulkAssignment(3, 2)
    b.set_block(0, 1, np.array([0, 1]))
    b.set_block(1, 2, np.array([0, 1]))
    b.set_block(0, 2, np.array([1, 0]))
    return b


def test_toy_graph_consistency():
    b = toy()
    assert graph_consistency(1, b) == pytest.approx(5 / 6, abs=1e-15)
    for q in range(3):
        assert graph_consistency(q, b) == pytest.approx(dense_graph_consistency(q, b), abs=1e-12)


def test_toy_node_consistency():
    b = toy()
    assert np.allclose(node_consistency(b), dense_node_consistency(b), atol=1e-12)


def test_consistent_bulk_scores_one():
    b = consistent_bulk(5, 4, np.random.default_rng(0))
    assert all(graph_consistency(q, b) == 1.0 for q in range(5))
    assert np.all(node_consistency(b) == 1.0)
    assert mean_graph_consistency(b) == 1.0


@pytest.mark.parametrize("case", range(100))
def test_against_dense_oracle(case):
    rng = np.random.default_rng(case)
    N, n = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    b = random_bulk(N, n, rng, p_unmatched=rng.random() * 0.5)
    for q in range(N):
        assert abs(graph_consistency(q, b) - dense_graph_consistency(q, b)) <= 1e-12
    assert np.max(np.abs(node_consistency(b) - dense_node_consistency(b))) <= 1e-12
