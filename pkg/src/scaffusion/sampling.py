"""Sparse depth from dense ground truth: Harris+k-means corners, lidar-like
scanlines, and uniform random pixels."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .util import rng

KINDS = ("harris-kmeans", "scanline", "uniform")


@dataclass
class SparseDepthMap:
    values: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.values > 0, self.validity):
            raise ValueError("sparse values must be positive exactly on the validity mask")

    @property
    def density(self) -> float:
        return float(self.validity.mean())

    @classmethod
    def from_mask(cls, depth: np.ndarray, mask: np.ndarray) -> "SparseDepthMap":
        mask = mask.astype(bool) & (depth > 0)
        return cls(np.where(mask, depth, 0.0), mask)


@dataclass
class SamplingStrategy:
    kind: str = "harris-kmeans"
    n: int = 375
    kappa: float = 0.04
    sigma: float = 1.0
    lines: int | None = None
    dropout: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampling strategy {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError("point count must be >= 1")


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image @ np.array([0.299, 0.587, 0.114])
    return image


def harris_response(image: np.ndarray, kappa: float = 0.04, sigma: float = 1.0) -> np.ndarray:
    """R = det(M) - kappa trace(M)^2 for the Gaussian-windowed structure tensor M."""
    gray = to_gray(image)
    ix = ndimage.sobel(gray, axis=1, mode="reflect")
    iy = ndimage.sobel(gray, axis=0, mode="reflect")
    sxx = ndimage.gaussian_filter(ix * ix, sigma)
    syy = ndimage.gaussian_filter(iy * iy, sigma)
    sxy = ndimage.gaussian_filter(ix * iy, sigma)
    return sxx * syy - sxy * sxy - kappa * (sxx + syy) ** 2


def _kmeans_pp(points: np.ndarray, k: int, r: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[r.integers(len(points))]
    d2 = ((points - centers[0]) ** 2).sum(1)
    for i in range(1, k):
        total = d2.sum()
        idx = r.choice(len(points), p=d2 / total) if total > 0 else r.integers(len(points))
        centers[i] = points[idx]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(1))
    return centers


def kmeans_subsample(points: np.ndarray, k: int, seed: int = 0,
                     max_iter: int = 50, tol: float = 0.5) -> np.ndarray:
    """Pick ``k`` of the input pixel positions spread over the image.

    Lloyd iterations on (x, y) coordinates with k-means++ seeding; each final
    centroid is replaced by its nearest unused input point, so the result is a
    subset of ``points``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(points) <= k:
        if len(points) < k:
            warnings.warn(f"only {len(points)} candidates for k={k}; "
                          f"shortfall of {k - len(points)}", stacklevel=2)
        return points.copy()
    r = rng(seed, "kmeans")
    centers = _kmeans_pp(points, k, r)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
        labels = d2.argmin(1)
        new = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for dim in range(2):
            sums = np.bincount(labels, weights=points[:, dim], minlength=k)
            new[counts > 0, dim] = sums[counts > 0] / counts[counts > 0]
        motion = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if motion < tol:
            break
    d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
    chosen = np.zeros(len(points), dtype=bool)
    picks = []
    for c in range(k):
        order = np.argsort(d2[:, c], kind="stable")
        idx = order[~chosen[order]][0]
        chosen[idx] = True
        picks.append(idx)
    return points[np.sort(picks)]


def harris_kmeans_mask(image: np.ndarray, n: int, kappa: float = 0.04, sigma: float = 1.0,
                       seed: int = 0) -> np.ndarray:
    response = harris_response(image, kappa, sigma)
    peaks = (response == ndimage.maximum_filter(response, size=3)) & (response > 0)
    ys, xs = np.nonzero(peaks)
    if len(xs) < n:
        # too few corner peaks: top up with the strongest remaining responses
        rest = np.argsort(-np.where(peaks, -np.inf, response), axis=None, kind="stable")
        extra = rest[: n - len(xs)]
        ey, ex = np.unravel_index(extra, response.shape)
        ys, xs = np.concatenate([ys, ey]), np.concatenate([xs, ex])
    picks = kmeans_subsample(np.stack([xs, ys], 1), n, seed).astype(int)
    mask = np.zeros(response.shape, dtype=bool)
    mask[picks[:, 1], picks[:, 0]] = True
    return mask


def scanline_rows(height: int, lines: int, seed: int = 0, top: float = 0.4) -> np.ndarray:
    """Distinct rows for ``lines`` jittered scanlines below ``top * height``.

    The band is split into equal bins with one randomly placed row per bin; the
    band grows upward when there are more lines than rows.
    """
    if lines < 1:
        raise ValueError("need at least one scanline")
    lines = min(lines, height)
    first = min(int(top * height), height - lines)
    edges = np.floor(np.linspace(first, height, lines + 1)).astype(int)
    r = rng(seed, "scanline")
    return np.array([r.integers(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])


def sample_scanlines(depth: np.ndarray, lines: int, seed: int = 0, dropout: float = 0.2,
                     top: float = 0.4) -> SparseDepthMap:
    mask = np.zeros(depth.shape, dtype=bool)
    mask[scanline_rows(depth.shape[0], lines, seed, top)] = True
    if dropout > 0:
        mask &= rng(seed, "dropout").random(depth.shape) >= dropout
    return SparseDepthMap.from_mask(depth, mask)


def sample_uniform(depth: np.ndarray, n: int, seed: int = 0) -> SparseDepthMap:
    n = min(n, depth.size)
    idx = rng(seed, "uniform").choice(depth.size, size=n, replace=False)
    mask = np.zeros(depth.size, dtype=bool)
    mask[idx] = True
    return SparseDepthMap.from_mask(depth, mask.reshape(depth.shape))


def make_sparse(depth: np.ndarray, image: np.ndarray | None, strategy: SamplingStrategy,
                seed: int = 0) -> SparseDepthMap:
    if strategy.kind == "harris-kmeans":
        if image is None:
            raise ValueError("harris-kmeans sampling needs the image")
        mask = harris_kmeans_mask(image, min(strategy.n, depth.size), strategy.kappa,
                                  strategy.sigma, seed)
        return SparseDepthMap.from_mask(depth, mask)
    if strategy.kind == "scanline":
        lines = strategy.lines
        if lines is None:
            lines = max(1, int(round(strategy.n / (depth.shape[1] * (1 - strategy.dropout)))))
        return sample_scanlines(depth, lines, seed, strategy.dropout)
    return sample_uniform(depth, strategy.n, seed)


def points_for_density(density: float, height: int, width: int) -> int:
    return max(1, int(round(density * height * width)))
