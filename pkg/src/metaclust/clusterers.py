"""Base unsupervised algorithms.

K-means (Lloyd iteration with k-means++ seeding), agglomerative linkage via
Lance-Williams updates, threshold single-linkage on weighted graphs, and the
outlier-removal wrapper that prunes the points furthest from the mean before
clustering and reattaches them to the nearest resulting center.

Every algorithm is a pure function of (input, seed); ties break toward the
lowest index everywhere for bit-reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from metaclust.data_model import Partition, WeightedGraph, derive_seed

__all__ = [
    "ClustererSpec",
    "ClusterResult",
    "kmeans",
    "agglomerative",
    "single_linkage_threshold",
    "cluster_with_outlier_removal",
    "run_spec",
]

LINKAGES = ("single", "complete", "average", "ward")
KINDS = ("kmeans", "agglo_single", "agglo_complete", "agglo_average", "agglo_ward")

MAX_LLOYD_ITERATIONS = 300


@dataclass(frozen=True)
class ClustererSpec:
    """Configuration of a base clustering algorithm."""

    kind: str
    k: int = 2
    normalize_first: bool = False
    restarts: int = 1  # kmeans only
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown clusterer kind {self.kind!r}")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    @property
    def name(self) -> str:
        return self.kind + ("-N" if self.normalize_first else "")


@dataclass(frozen=True)
class ClusterResult:
    """A partition plus per-part centroids (and inertia for k-means)."""

    partition: Partition
    centers: np.ndarray  # (k, d), arithmetic mean of each part's points
    inertia: Optional[float] = None


def _part_centers(points: np.ndarray, partition: Partition) -> np.ndarray:
    return np.stack([points[list(p)].mean(axis=0) for p in partition.parts])


def _labels_to_parts(labels: np.ndarray, k: int) -> tuple:
    return tuple(tuple(np.flatnonzero(labels == j)) for j in range(k))


def _sq_dist_to_centers(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances; clipped against tiny negatives.
    d2 = (
        (points**2).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers**2).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        else:
            # All candidate distances are zero (duplicate points): uniform pick.
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _fix_empty_clusters(points: np.ndarray, centers: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    for j in range(k):
        if counts[j] > 0:
            continue
        # Reseed with the point furthest from its assigned center, excluding
        # points that are alone in their cluster; ties go to the lowest index.
        dist = ((points - centers[labels]) ** 2).sum(axis=1)
        movable = counts[labels] > 1
        dist = np.where(movable, dist, -np.inf)
        p = int(np.argmax(dist))
        counts[labels[p]] -= 1
        labels[p] = j
        counts[j] = 1
    return labels


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple:
    centers = _kmeans_pp_init(points, k, rng)
    labels = None
    for _ in range(MAX_LLOYD_ITERATIONS):
        new_labels = np.argmin(_sq_dist_to_centers(points, centers), axis=1)
        new_labels = _fix_empty_clusters(points, centers, new_labels, k)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.stack([points[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(points: np.ndarray, k: int, restarts: int = 1, seed: int = 0) -> ClusterResult:
    """Best-inertia result over independent Lloyd runs with k-means++ seeding.

    Each restart draws its own sub-seed; the winner is the minimum-inertia run
    with the lowest restart index.  All k parts are non-empty (empty clusters
    are reseeded to the point furthest from its center).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    if k < 2:
        raise ValueError("k must be >= 2")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, r))
        labels, _centers, inertia = _lloyd(points, k, rng)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    labels, inertia = best
    partition = Partition(n_items=n, parts=_labels_to_parts(labels, k))
    return ClusterResult(partition=partition, centers=_part_centers(points, partition), inertia=inertia)


_LW_COEFFS = {
    # alpha_i, alpha_j, gamma as functions of (ni, nj, nm); beta handled inline.
    "single": lambda ni, nj, nm: (0.5, 0.5, 0.0, -0.5),
    "complete": lambda ni, nj, nm: (0.5, 0.5, 0.0, 0.5),
    "average": lambda ni, nj, nm: (ni / (ni + nj), nj / (ni + nj), 0.0, 0.0),
    "ward": lambda ni, nj, nm: (
        (ni + nm) / (ni + nj + nm),
        (nj + nm) / (ni + nj + nm),
        -nm / (ni + nj + nm),
        0.0,
    ),
}


def agglomerative(points: np.ndarray, k: int, linkage: str = "single") -> ClusterResult:
    """Greedy merging from singletons with Lance-Williams updates to k clusters.

    Ward operates on squared Euclidean distances; ties break toward the
    lexicographically lowest active cluster-slot pair.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not (2 <= k <= n):
        raise ValueError(f"k={k} out of range for n={n}")

    diff = points[:, None, :] - points[None, :, :]
    dist = (diff**2).sum(axis=2)
    if linkage != "ward":
        dist = np.sqrt(dist)
    np.fill_diagonal(dist, np.inf)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=int)
    members = [[i] for i in range(n)]
    coeffs = _LW_COEFFS[linkage]

    for _ in range(n - k):
        masked = np.where(active[:, None] & active[None, :], dist, np.inf)
        flat = int(np.argmin(masked))  # row-major argmin = lexicographic tie-break
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        d_ij = dist[i, j]
        ni, nj = sizes[i], sizes[j]
        for m in range(n):
            if not active[m] or m in (i, j):
                continue
            ai, aj, beta, gamma = coeffs(ni, nj, sizes[m])
            new_d = ai * dist[i, m] + aj * dist[j, m] + beta * d_ij + gamma * abs(dist[i, m] - dist[j, m])
            dist[i, m] = dist[m, i] = new_d
        active[j] = False
        sizes[i] = ni + nj
        members[i].extend(members[j])
        members[j] = []

    parts = sorted((tuple(sorted(m)) for m in members if m), key=lambda p: p[0])
    partition = Partition(n_items=n, parts=tuple(parts))
    return ClusterResult(partition=partition, centers=_part_centers(points, partition), inertia=None)


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


def single_linkage_threshold(graph: WeightedGraph, r: float, strict: bool = False) -> Partition:
    """Connected components of the subgraph keeping edges with w <= r (or < r).

    May return a one-part partition, which is representable but invalid as a
    clustering; callers consult validity.
    """
    uf = UnionFind(graph.n_vertices)
    for u, v, w in graph.edges:
        if (w < r) if strict else (w <= r):
            uf.union(u, v)
    groups: dict = {}
    for v in range(graph.n_vertices):
        groups.setdefault(uf.find(v), []).append(v)
    parts = sorted((tuple(g) for g in groups.values()), key=lambda p: p[0])
    return Partition(n_items=graph.n_vertices, parts=tuple(parts))


def _normalize_with(ref: np.ndarray):
    """Zero-mean unit-population-variance transform fitted on ref."""
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    scale = np.where(std > 0, std, 1.0)

    def transform(x):
        out = (x - mean) / scale
        out[:, std == 0] = 0.0
        return out

    return transform


def run_spec(spec: ClustererSpec, points: np.ndarray) -> ClusterResult:
    """Run the configured algorithm on a point matrix."""
    points = np.asarray(points, dtype=float)
    work = _normalize_with(points)(points.copy()) if spec.normalize_first else points
    if spec.kind == "kmeans":
        result = kmeans(work, spec.k, restarts=spec.restarts, seed=spec.seed)
    else:
        result = agglomerative(work, spec.k, linkage=spec.kind.removeprefix("agglo_"))
    if spec.normalize_first:
        # Report centers in the original coordinate space.
        result = ClusterResult(
            partition=result.partition,
            centers=_part_centers(points, result.partition),
            inertia=result.inertia,
        )
    return result


def cluster_with_outlier_removal(
    points: np.ndarray,
    theta: float,
    base: ClustererSpec,
    use_raw_norm: bool = False,
) -> ClusterResult:
    """Prune the floor(theta*n) points furthest from the mean, cluster, reattach.

    The pruned points are assigned to the cluster whose center is closest;
    the returned partition always covers all n points.  ``use_raw_norm``
    switches the pruning criterion from distance-to-mean to raw norm.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not (0.0 <= theta < 1.0):
        raise ValueError("theta must lie in [0, 1)")
    n_out = int(math.floor(theta * n))
    if n_out > n - 2:
        raise ValueError("theta removes too many points")
    if n_out == 0:
        return run_spec(base, points)
    if n - n_out < base.k:
        raise ValueError(f"pruning leaves {n - n_out} points for k={base.k}")

    ref = points if use_raw_norm else points - points.mean(axis=0)
    dist = np.sqrt((ref**2).sum(axis=1))
    # Furthest first; equal distances keep the lower index first.
    order = np.lexsort((np.arange(n), -dist))
    outliers = np.sort(order[:n_out])
    inliers = np.sort(order[n_out:])

    inner = run_spec(base, points[inliers])
    centers = inner.centers
    if base.normalize_first:
        transform = _normalize_with(points[inliers])
        reattach_points = transform(points[outliers].copy())
        reattach_centers = np.stack(
            [transform(points[inliers][list(p)].copy()).mean(axis=0) for p in inner.partition.parts]
        )
    else:
        reattach_points = points[outliers]
        reattach_centers = centers

    full_parts = [list(inliers[list(p)]) for p in inner.partition.parts]
    nearest = np.argmin(_sq_dist_to_centers(reattach_points, reattach_centers), axis=1)
    for out_idx, center_idx in zip(outliers, nearest):
        full_parts[center_idx].append(int(out_idx))

    partition = Partition(n_items=n, parts=tuple(tuple(sorted(p)) for p in full_parts))
    final_centers = _part_centers(points, partition)
    inertia = None
    if base.kind == "kmeans":
        labels = partition.to_label_array()
        inertia = float(((points - final_centers[labels]) ** 2).sum())
    return ClusterResult(partition=partition, centers=final_centers, inertia=inertia)
