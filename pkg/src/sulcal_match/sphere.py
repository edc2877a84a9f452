"""Geometry on the unit sphere S^2.

Points are plain ``numpy`` arrays: one point has shape ``(3,)``, a batch has
shape ``(n, 3)``. Randomness always flows through an :class:`RngStream` so that
a ``(seed, stream)`` pair pins down the whole sample sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-9
DEGENERATE_CENTROID = 1e-9


class DomainError(ValueError):
    """Input outside the domain of a geometric operation."""


class DegenerateCentroidError(DomainError):
    pass


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    Child streams are derived through :class:`numpy.random.SeedSequence`
    spawn keys, so ``RngStream(7, 3).child(2)`` never collides with the
    stream of another graph index.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise DomainError("seed and stream must be 64-bit unsigned integers")

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.path)
        return np.random.Generator(np.random.PCG64(seq))


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def check_unit(points, tol: float = UNIT_TOL) -> np.ndarray:
    """Return ``points`` as a float array, raising if any row is not unit norm."""
    arr = np.asarray(points, dtype=float)
    if arr.shape[-1] != 3:
        raise DomainError(f"expected 3D coordinates, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        raise DomainError(f"non-unit point(s): max |norm - 1| = {np.max(np.abs(norms - 1.0)):.3g}")
    return arr


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_uniform_sphere(count: int, rng) -> np.ndarray:
    """Draw ``count`` points uniformly on S^2 (normalized Gaussian vectors)."""
    if count < 1:
        raise DomainError("count must be >= 1")
    gen = _rng(rng)
    pts = gen.standard_normal((count, 3))
    norms = np.linalg.norm(pts, axis=1)
    # a zero Gaussian vector has probability 0 but would poison the batch
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        pts[bad] = gen.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(pts, axis=1)
    return pts / norms[:, None]


def geodesic_distance(a, b) -> np.ndarray | float:
    """Great-circle distance in radians, ``atan2(|a x b|, a . b)``.

    Broadcasts over leading dimensions.
    """
    a = check_unit(a)
    b = check_unit(b)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    d = np.arctan2(cross, dot)
    return float(d) if np.ndim(d) == 0 else d


def pairwise_geodesic(points: np.ndarray) -> np.ndarray:
    """Dense matrix of great-circle distances between rows of ``points``."""
    p = check_unit(points)
    return geodesic_distance(p[:, None, :], p[None, :, :])


def _tangent_basis(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(mu, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    return e1, e2


def sample_vmf(mu, kappa: float, rng, size: int | None = None) -> np.ndarray:
    """Sample the von Mises-Fisher distribution on S^2.

    On the 2-sphere the cosine ``w = mu . x`` has density proportional to
    ``exp(kappa * w)`` on ``[-1, 1]``, whose CDF inverts in closed form::

        w = 1 + log(u + (1 - u) * exp(-2 kappa)) / kappa

    The remaining tangent direction is uniform on the circle orthogonal to
    ``mu``. No rejection step is needed.

    Parameters
    ----------
    mu : array of shape (3,)
        Mean direction, unit norm.
    kappa : float
        Concentration, strictly positive.
    rng : RngStream or numpy Generator
    size : int, optional
        Number of samples. ``None`` returns a single point of shape ``(3,)``.
    """
    if not kappa > 0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    mu = check_unit(mu)
    if mu.shape != (3,):
        raise DomainError("mu must be a single point")
    gen = _rng(rng)
    n = 1 if size is None else int(size)
    u = 1.0 - gen.random(n)  # (0, 1]: keeps log finite when exp(-2 kappa) underflows
    w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    phi = gen.uniform(0.0, 2.0 * np.pi, n)
    e1, e2 = _tangent_basis(mu)
    r = np.sqrt(np.maximum(0.0, 1.0 - w * w))
    pts = (w[:, None] * mu[None, :]
           + (r * np.cos(phi))[:, None] * e1[None, :]
           + (r * np.sin(phi))[:, None] * e2[None, :])
    pts = normalize(pts)
    return pts[0] if size is None else pts


def sample_vmf_each(mus, kappa: float, rng) -> np.ndarray:
    """One vMF draw around each row of ``mus`` (shape ``(n, 3)``), same ``kappa``."""
    if not kappa > 0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    mus = check_unit(np.atleast_2d(mus))
    gen = _rng(rng)
    n = len(mus)
    u = 1.0 - gen.random(n)
    w = np.clip(1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa, -1.0, 1.0)
    phi = gen.uniform(0.0, 2.0 * np.pi, n)
    out = np.empty((n, 3))
    for k in range(n):
        e1, e2 = _tangent_basis(mus[k])
        r = np.sqrt(max(0.0, 1.0 - w[k] * w[k]))
        out[k] = w[k] * mus[k] + r * np.cos(phi[k]) * e1 + r * np.sin(phi[k]) * e2
    return normalize(out)


def vmf_mean_resultant(kappa: float) -> float:
    """Expected resultant length ``coth(kappa) - 1/kappa`` of vMF on S^2."""
    return float(1.0 / np.tanh(kappa) - 1.0 / kappa)


def spherical_centroid(points) -> np.ndarray:
    """Normalized Euclidean mean of a non-empty set of unit vectors."""
    p = check_unit(np.atleast_2d(points))
    if p.shape[0] == 0:
        raise DomainError("centroid of an empty set")
    mean = p.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < DEGENERATE_CENTROID:
        raise DegenerateCentroidError(f"Euclidean mean norm {norm:.3g} below {DEGENERATE_CENTROID}")
    return mean / norm
