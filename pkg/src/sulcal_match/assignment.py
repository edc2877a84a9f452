"""Pairwise and bulk assignment containers plus the triplet export format.

A binary block ``X_ij`` between padded graphs is stored as an integer map
``match[u] = v`` (``-1`` when row ``u`` is empty), which is exact for partial
permutations and keeps the whole ``N x N`` bulk at ``N^2 n`` integers.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UNMATCHED = -1


class AssignmentFormatError(ValueError):
    pass


def match_to_matrix(match: np.ndarray, n: int | None = None) -> np.ndarray:
    n = len(match) if n is None else n
    X = np.zeros((len(match), n))
    rows = np.flatnonzero(match >= 0)
    X[rows, match[rows]] = 1.0
    return X


def matrix_to_match(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if np.any((X != 0) & (X != 1)):
        raise ValueError("matrix is not binary")
    if np.any(X.sum(axis=0) > 1) or np.any(X.sum(axis=1) > 1):
        raise ValueError("matrix is not a partial permutation")
    match = np.full(X.shape[0], UNMATCHED, dtype=np.int64)
    r, c = np.nonzero(X)
    match[r] = c
    return match


def invert_match(match: np.ndarray, n: int) -> np.ndarray:
    inv = np.full(n, UNMATCHED, dtype=np.int64)
    rows = np.flatnonzero(match >= 0)
    inv[match[rows]] = rows
    return inv


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Match of ``X_a @ X_b``; works on stacked maps along the last axis."""
    out = np.take_along_axis(b, np.where(a >= 0, a, 0), axis=-1) if b.ndim == a.ndim else b[np.where(a >= 0, a, 0)]
    return np.where(a >= 0, out, UNMATCHED)


@dataclass(frozen=True, eq=False)
class PairAssignment:
    """Binary partial permutation between two padded graphs."""

    match: np.ndarray
    source: str = ""
    target: str = ""

    @property
    def n(self) -> int:
        return len(self.match)

    def matrix(self) -> np.ndarray:
        return match_to_matrix(self.match)

    def transpose(self) -> "PairAssignment":
        return PairAssignment(invert_match(self.match, self.n), self.target, self.source)


class BulkAssignment:
    """All ``N x N`` blocks of a population at padded size ``n``.

    ``perm[i, j, u]`` is the node of graph ``j`` matched to node ``u`` of
    graph ``i``. Diagonal blocks are identities and ``perm[j, i]`` is kept the
    inverse of ``perm[i, j]``.
    """

    def __init__(self, n_graphs: int, n: int, perm: np.ndarray | None = None):
        self.N = int(n_graphs)
        self.n = int(n)
        if perm is None:
            perm = np.full((self.N, self.N, self.n), UNMATCHED, dtype=np.int64)
            perm[np.arange(self.N), np.arange(self.N)] = np.arange(self.n)
        self.perm = np.asarray(perm, dtype=np.int64)
        if self.perm.shape != (self.N, self.N, self.n):
            raise ValueError(f"perm shape {self.perm.shape} != {(self.N, self.N, self.n)}")

    @property
    def m(self) -> int:
        return self.N * self.n

    def copy(self) -> "BulkAssignment":
        return BulkAssignment(self.N, self.n, self.perm.copy())

    def set_block(self, i: int, j: int, match: np.ndarray) -> None:
        if i == j:
            raise ValueError("diagonal blocks are fixed to the identity")
        match = np.asarray(match, dtype=np.int64)
        self.perm[i, j] = match
        self.perm[j, i] = invert_match(match, self.n)

    def block(self, i: int, j: int) -> np.ndarray:
        return match_to_matrix(self.perm[i, j], self.n)

    def pair(self, i: int, j: int) -> PairAssignment:
        return PairAssignment(self.perm[i, j].copy(), str(i), str(j))

    def to_dense(self, dtype=float) -> np.ndarray:
        X = np.zeros((self.m, self.m), dtype=dtype)
        for i in range(self.N):
            for j in range(self.N):
                u = np.flatnonzero(self.perm[i, j] >= 0)
                X[i * self.n + u, j * self.n + self.perm[i, j, u]] = 1
        return X

    def to_sparse(self) -> sp.csr_matrix:
        i, j, u = np.nonzero(self.perm >= 0)
        v = self.perm[i, j, u]
        rows = i * self.n + u
        cols = j * self.n + v
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.m, self.m))

    @classmethod
    def from_dense(cls, X: np.ndarray, n_graphs: int, n: int) -> "BulkAssignment":
        b = cls(n_graphs, n)
        for i in range(n_graphs):
            for j in range(n_graphs):
                b.perm[i, j] = matrix_to_match(X[i * n:(i + 1) * n, j * n:(j + 1) * n])
        return b

    def check(self) -> None:
        """Raise ``AssertionError`` if a structural invariant fails."""
        idx = np.arange(self.n)
        for i in range(self.N):
            assert np.array_equal(self.perm[i, i], idx), f"block ({i},{i}) is not the identity"
            for j in range(self.N):
                row = self.perm[i, j]
                hit = row[row >= 0]
                assert len(np.unique(hit)) == len(hit), f"block ({i},{j}) maps two rows to one column"
                assert np.array_equal(self.perm[j, i], invert_match(row, self.n)), \
                    f"block ({j},{i}) is not the transpose of ({i},{j})"

    def equals(self, other: "BulkAssignment") -> bool:
        return self.N == other.N and self.n == other.n and np.array_equal(self.perm, other.perm)


# -- triplet export ------------------------------------------------------------

TRIPLET_HEADER = ["graph_i", "graph_j", "node_u", "node_v"]


def _dummy_path(path: Path) -> Path:
    return path.with_name(path.stem + ".dummies" + path.suffix)


def write_triplets(bulk: BulkAssignment, real_sizes, path: str | os.PathLike) -> None:
    """Write matched real-node pairs ``(i < j)`` as ``graph_i,graph_j,node_u,node_v`` rows.

    Matches touching a dummy node go to a sibling ``*.dummies.csv`` file in
    the same format, so a reload reproduces the padded bulk exactly.
    """
    path = Path(path)
    sizes = np.asarray(real_sizes)
    real_rows, dummy_rows = [], []
    for i in range(bulk.N):
        for j in range(i + 1, bulk.N):
            row = bulk.perm[i, j]
            for u in np.flatnonzero(row >= 0):
                v = int(row[u])
                rec = (i, j, int(u), v)
                (real_rows if u < sizes[i] and v < sizes[j] else dummy_rows).append(rec)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIPLET_HEADER)
        w.writerows(real_rows)
    dpath = _dummy_path(path)
    if dummy_rows:
        with open(dpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRIPLET_HEADER)
            w.writerows(dummy_rows)
    elif dpath.exists():
        dpath.unlink()


def _read_rows(path: Path, bulk: BulkAssignment) -> None:
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and row == TRIPLET_HEADER:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 fields, got {len(row)}")
                i, j, u, v = (int(x) for x in row)
                if not (0 <= i < bulk.N and 0 <= j < bulk.N and i != j):
                    raise ValueError(f"graph pair ({i}, {j}) out of range")
                if not (0 <= u < bulk.n and 0 <= v < bulk.n):
                    raise ValueError(f"node pair ({u}, {v}) out of range")
                if i > j:
                    i, j, u, v = j, i, v, u
                if bulk.perm[i, j, u] not in (UNMATCHED, v) or bulk.perm[j, i, v] not in (UNMATCHED, u):
                    raise ValueError("node matched twice in the same block")
            except ValueError as exc:
                raise AssignmentFormatError(f"{path}:{lineno}: {exc}") from None
            bulk.perm[i, j, u] = v
            bulk.perm[j, i, v] = u


def read_triplets(path: str | os.PathLike, n_graphs: int, n: int) -> BulkAssignment:
    path = Path(path)
    bulk = BulkAssignment(n_graphs, n)
    _read_rows(path, bulk)
    if _dummy_path(path).exists():
        _read_rows(_dummy_path(path), bulk)
    return bulk
