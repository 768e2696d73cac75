"""Spectral distances, classical MDS and Procrustes alignment."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .auditory import CochleaScaledSpectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistanceMatrix:
    labels: tuple
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        n = len(self.labels)
        if d.shape != (n, n):
            raise ValueError(f"distance matrix shape {d.shape} does not match {n} labels")
        if not np.allclose(d, d.T, rtol=0, atol=1e-9):
            raise ValueError("distance matrix is not symmetric")
        if np.any(np.abs(np.diag(d)) > 1e-9) or np.any(d < 0):
            raise ValueError("distance matrix needs a zero diagonal and non-negative entries")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class MdsEmbedding:
    """2-D (or k-D) coordinates for labelled items.

    Column 0 is plotted horizontally (frontness), column 1 vertically
    (height) once the embedding has been oriented and aligned.
    """

    labels: tuple
    coords: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] != len(self.labels):
            raise ValueError("coords must be an (n_labels, dims) array")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64))

    def coord(self, label):
        return self.coords[self.labels.index(label)]

    def pairwise(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))


def euclidean_distance(p: CochleaScaledSpectrum, q: CochleaScaledSpectrum) -> float:
    """Root of the summed squared level difference over all channels."""
    if not (p.normalized and q.normalized):
        raise ValueError("spectra must be normalised before comparison")
    if p.center_frequencies.shape != q.center_frequencies.shape or not np.allclose(
            p.center_frequencies, q.center_frequencies, rtol=1e-12, atol=0):
        raise ValueError("spectra are on different centre-frequency grids")
    diff = q.levels_db - p.levels_db
    return float(np.sqrt(np.dot(diff, diff)))


def pairwise_distances(spectra, labels) -> DistanceMatrix:
    spectra = list(spectra)
    labels = list(labels)
    if len(spectra) < 2:
        raise ValueError("need at least two spectra")
    if len(spectra) != len(labels):
        raise ValueError("one label per spectrum required")
    n = len(spectra)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = euclidean_distance(spectra[i], spectra[j])
    return DistanceMatrix(labels, d)


def classical_mds(D: DistanceMatrix, dims: int = 2) -> MdsEmbedding:
    """Torgerson scaling of a distance matrix.

    ``B = -1/2 J D**2 J`` is diagonalised; coordinates are the leading
    eigenvectors scaled by the square roots of their (clamped) eigenvalues.
    Returned eigenvalues are the leading `dims` ones, before clamping.
    """
    d = D.d
    n = d.shape[0]
    if n < dims + 1:
        raise ValueError(f"need at least {dims + 1} points for a {dims}-D embedding")
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (d ** 2) @ J
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    lam_max = max(evals[0], 0.0)
    if evals[-1] < -1e-6 * lam_max and lam_max > 0:
        logger.warning("distance matrix is not Euclidean: eigenvalue %.3g vs max %.3g",
                       evals[-1], lam_max)
    # eigenvalues within round-off of zero are zero; their square roots
    # would otherwise inject ~1e-8 spurious spread into degenerate dimensions
    top = evals[:dims].copy()
    top[top <= n * np.finfo(float).eps * lam_max] = 0.0
    coords = evecs[:, :dims] * np.sqrt(top)
    coords -= coords.mean(axis=0)
    return MdsEmbedding(D.labels, coords, evals[:dims])


def procrustes_rotation(target, source) -> np.ndarray:
    """Orthogonal matrix R minimising ``||source @ R - target||``."""
    u, _, vt = np.linalg.svd(np.asarray(source).T @ np.asarray(target))
    return u @ vt


def procrustes_align(target: MdsEmbedding, source: MdsEmbedding) -> MdsEmbedding:
    """Rotate/reflect `source` onto `target`; no scaling or translation."""
    if tuple(target.labels) != tuple(source.labels):
        raise ValueError("embeddings must share labels in the same order")
    R = procrustes_rotation(target.coords, source.coords)
    return MdsEmbedding(source.labels, source.coords @ R, source.eigenvalues)


def orient(e: MdsEmbedding, left="i", top="a") -> MdsEmbedding:
    """Flip axes so `left` has a negative first coordinate and `top` a positive second."""
    coords = e.coords.copy()
    if coords[e.labels.index(left), 0] > 0:
        coords[:, 0] *= -1
    if coords.shape[1] > 1 and coords[e.labels.index(top), 1] < 0:
        coords[:, 1] *= -1
    return MdsEmbedding(e.labels, coords, e.eigenvalues)


def axis_ratio(e: MdsEmbedding) -> float:
    """Extent along dimension 2 over extent along dimension 1."""
    if len(e.labels) < 2:
        raise ValueError("need at least two points")
    extent = np.ptp(e.coords[:, :2], axis=0)
    if extent[0] == 0:
        raise ValueError("embedding has zero extent along dimension 1")
    return float(extent[1] / extent[0])


def on_convex_hull(e: MdsEmbedding, labels, tol=1e-9) -> dict:
    """Whether each of `labels` lies on the boundary of the 2-D hull."""
    pts = e.coords[:, :2]
    hull = ConvexHull(pts)
    # facet equations: normal . x + offset <= 0 inside
    scale = max(np.ptp(pts, axis=0).max(), 1.0)
    out = {}
    for label in labels:
        x = pts[e.labels.index(label)]
        dist = hull.equations[:, :2] @ x + hull.equations[:, 2]
        out[label] = bool(np.max(dist) >= -tol * scale)
    return out
