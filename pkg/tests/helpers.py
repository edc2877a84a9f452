"""Shared builders for bulk-assignment tests."""
import numpy as np

from sulcal_match.assignment import BulkAssignment


def random_bulk(N, n, rng, p_unmatched=0.2):
    """Random bulk of partial permutations with the transpose invariant."""
    b = BulkAssignment(N, n)
    for i in range(N):
        for j in range(i + 1, N):
            m = rng.permutation(n)
            m[rng.random(n) < p_unmatched] = -1
            b.set_block(i, j, m)
    return b


def consistent_bulk(N, n, rng):
    """Bulk built from random permutations into a shared universe."""
    perms = [rng.permutation(n) for _ in range(N)]
    b = BulkAssignment(N, n)
    for i in range(N):
        for j in range(i + 1, N):
            b.set_block(i, j, np.argsort(perms[j])[perms[i]])
    return b


def noisy_bulk(N, n, rng, flips=2):
    """Consistent bulk with a few random transpositions in some blocks."""
    b = consistent_bulk(N, n, rng)
    for i in range(N):
        for j in range(i + 1, N):
            if rng.random() < 0.5:
                m = b.perm[i, j].copy()
                for _ in range(flips):
                    u, v = rng.choice(n, 2, replace=False)
                    m[[u, v]] = m[[v, u]]
                b.set_block(i, j, m)
    return b


def dense_blocks(bulk):
    X = bulk.to_dense()
    n = bulk.n
    return [[X[i * n:(i + 1) * n, j * n:(j + 1) * n] for j in range(bulk.N)] for i in range(bulk.N)]
