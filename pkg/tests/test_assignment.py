import numpy as np
import pytest

from sulcal_match.assignment import (AssignmentFormatError, BulkAssignment, PairAssignment, compose,
                                     invert_match, match_to_matrix, matrix_to_match, read_triplets,
                                     write_triplets)

from helpers import random_bulk


def test_match_matrix_round_trip():
    m = np.array([2, -1, 0, 3])
    X = match_to_matrix(m)
    assert X.sum(axis=0).max() <= 1 and X.sum(axis=1).max() <= 1
    assert np.array_equal(matrix_to_match(X), m)
    with pytest.raises(ValueError):
        matrix_to_match(np.ones((2, 2)))


def test_invert_and_compose_agree_with_matrices():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.permutation(5), rng.permutation(5)
        a[rng.random(5) < 0.3] = -1
        b[rng.random(5) < 0.3] = -1
        assert np.array_equal(match_to_matrix(compose(a, b), 5), match_to_matrix(a, 5) @ match_to_matrix(b, 5))
        assert np.array_equal(match_to_matrix(invert_match(a, 5), 5), match_to_matrix(a, 5).T)


def test_pair_transpose():
    pa = PairAssignment(np.array([1, 2, 0]), "a", "b")
    t = pa.transpose()
    assert np.array_equal(t.matrix(), pa.matrix().T) and t.source == "b"


def test_bulk_invariants_and_dense_round_trip():
    b = random_bulk(4, 5, np.random.default_rng(1))
    b.check()
    X = b.to_dense()
    assert np.array_equal(X, X.T)
    assert np.array_equal(b.to_sparse().toarray(), X)
    assert BulkAssignment.from_dense(X, 4, 5).equals(b)
    with pytest.raises(ValueError):
        b.set_block(1, 1, np.arange(5))


def test_check_catches_broken_transpose():
    b = random_bulk(3, 4, np.random.default_rng(2))
    b.perm[1, 0] = np.arange(4)[::-1]
    b.perm[0, 1] = np.arange(4)
    with pytest.raises(AssertionError):
        b.check()


def test_triplets_round_trip(tmp_path):
    b = random_bulk(4, 6, np.random.default_rng(3))
    sizes = [6, 4, 5, 6]
    path = tmp_path / "x.csv"
    write_triplets(b, sizes, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "graph_i,graph_j,node_u,node_v"
    for line in lines[1:]:
        i, j, u, v = map(int, line.split(","))
        assert i < j and u < sizes[i] and v < sizes[j]
    assert read_triplets(path, 4, 6).equals(b)


def test_triplets_without_dummies_leave_no_sibling(tmp_path):
    b = random_bulk(3, 4, np.random.default_rng(4))
    write_triplets(b, [4, 4, 4], tmp_path / "y.csv")
    assert not (tmp_path / "y.dummies.csv").exists()


@pytest.mark.parametrize("body, lineno", [
    ("0,1,0,0\n0,1,x,1\n", 3),
    ("0,1,0,0\n0,1,1,0\n", 3),
    ("0,1,0\n", 2),
    ("0,0,0,0\n", 2),
    ("0,1,0,9\n", 2),
])
def test_malformed_triplets_report_line(tmp_path, body, lineno):
    path = tmp_path / "bad.csv"
    path.write_text("graph_i,graph_j,node_u,node_v\n" + body)
    with pytest.raises(AssignmentFormatError, match=f"bad.csv:{lineno}:"):
        read_triplets(path, 2, 3)
