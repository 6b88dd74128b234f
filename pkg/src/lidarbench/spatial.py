"""Spatial indexes: k-d tree queries and voxel grids with per-cell Gaussians.

The k-d tree is scipy's cKDTree wrapped so that query results are exactly
the brute-force answer: distances recomputed in double precision, ties
broken by ascending point index, radius searches strictly inside r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInputError
from .geometry import PointCloud

# voxel integer coordinates are packed into one int64 key (21 bits per axis)
_KEY_OFFSET = 1 << 20
_KEY_SPAN = 1 << 21


def _pack_cells(cells: np.ndarray) -> np.ndarray:
    c = cells.astype(np.int64) + _KEY_OFFSET
    if c.min(initial=0) < 0 or c.max(initial=0) >= _KEY_SPAN:
        raise ValueError("voxel coordinates out of packable range")
    return (c[:, 0] * _KEY_SPAN + c[:, 1]) * _KEY_SPAN + c[:, 2]


class KdTree:
    """Nearest-neighbor index over the points of one cloud."""

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise EmptyInputError("cannot index an empty cloud")
        self.cloud = cloud
        self._pts = cloud.xyz
        self._tree = cKDTree(self._pts)

    def __len__(self) -> int:
        return len(self._pts)

    def knn(self, query, k: int):
        """k nearest points: list of (index, distance), ascending distance.

        Ties broken by ascending index; returns the whole cloud when k >= N.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float64).reshape(3)
        n = len(self._pts)
        kq = min(k, n)
        d, _ = self._tree.query(q, k=kq)
        dmax = float(np.atleast_1d(d)[-1])
        # re-collect every point that could tie with the k-th distance, then
        # rank with exact arithmetic so the result matches brute force
        cand = self._tree.query_ball_point(q, dmax * (1.0 + 1e-12) + 1e-300)
        cand = np.asarray(cand, dtype=np.int64)
        if len(cand) < kq:  # safety net; should not happen
            cand = np.arange(n, dtype=np.int64)
        dist = np.linalg.norm(self._pts[cand] - q, axis=1)
        order = np.lexsort((cand, dist))
        take = order[:kq]
        return [(int(cand[i]), float(dist[i])) for i in take]

    def radius(self, query, r: float):
        """All points with distance strictly < r, as (index, distance) pairs."""
        if r <= 0.0:
            raise ValueError("radius must be positive")
        q = np.asarray(query, dtype=np.float64).reshape(3)
        cand = np.asarray(self._tree.query_ball_point(q, r), dtype=np.int64)
        if len(cand) == 0:
            return []
        dist = np.linalg.norm(self._pts[cand] - q, axis=1)
        keep = dist < r
        cand, dist = cand[keep], dist[keep]
        order = np.lexsort((cand, dist))
        return [(int(cand[i]), float(dist[i])) for i in order]

    # fast array paths used by the aligners (scipy ordering, no tie canon)
    def query_points(self, points: np.ndarray, k: int = 1):
        d, idx = self._tree.query(points, k=k)
        return d, idx


def kdtree_build(cloud: PointCloud) -> KdTree:
    return KdTree(cloud)


def kdtree_knn(tree: KdTree, query, k: int):
    return tree.knn(query, k)


def kdtree_radius(tree: KdTree, query, r: float):
    return tree.radius(query, r)


@dataclass
class VoxelCell:
    """One cubic cell: population count, mean, and 1/n covariance."""

    n: int
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None


class VoxelGrid:
    """Cubic-cell partition keyed by floor(coord / cell_size) per axis."""

    def __init__(self, cloud: PointCloud, cell_size: float):
        if cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.cloud = cloud
        pts = cloud.xyz
        cells = np.floor(pts / cell_size).astype(np.int64)
        keys = _pack_cells(cells)
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        uniq, starts, counts = np.unique(
            sorted_keys, return_index=True, return_counts=True
        )
        self._keys = uniq                      # sorted packed keys
        self._counts = counts.astype(np.int64)
        self._member_order = order             # point indices grouped by cell
        self._starts = starts
        self._coords = cells[order[starts]]    # integer coords per unique cell
        self._means: np.ndarray | None = None
        self._covs: np.ndarray | None = None

    @property
    def n_cells(self) -> int:
        return len(self._keys)

    def cell_coords(self) -> np.ndarray:
        """(M, 3) integer coordinates of the populated cells."""
        return self._coords.copy()

    def members(self, cell_index: int) -> np.ndarray:
        """Point indices belonging to one cell (ascending)."""
        s = self._starts[cell_index]
        e = s + self._counts[cell_index]
        return np.sort(self._member_order[s:e])

    def lookup(self, points: np.ndarray) -> np.ndarray:
        """Cell index containing each point, -1 where the cell is empty."""
        cells = np.floor(np.asarray(points) / self.cell_size).astype(np.int64)
        keys = _pack_cells(cells)
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.clip(pos, 0, len(self._keys) - 1)
        hit = self._keys[pos_c] == keys
        return np.where(hit, pos_c, -1)

    def compute_stats(self):
        """Per-cell mean and population (1/n) covariance, symmetric by construction."""
        pts = self.cloud.xyz[self._member_order]
        counts = self._counts
        group = np.repeat(np.arange(self.n_cells), counts)
        sums = np.zeros((self.n_cells, 3))
        np.add.at(sums, group, pts)
        means = sums / counts[:, None]
        centered = pts - means[group]
        outer = centered[:, :, None] * centered[:, None, :]
        covs = np.zeros((self.n_cells, 3, 3))
        np.add.at(covs, group, outer)
        covs /= counts[:, None, None]
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        self._means = means
        self._covs = covs
        return self

    @property
    def means(self) -> np.ndarray:
        if self._means is None:
            self.compute_stats()
        return self._means

    @property
    def covs(self) -> np.ndarray:
        if self._covs is None:
            self.compute_stats()
        return self._covs

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    def cells(self) -> dict:
        """Dict view {(ix, iy, iz): VoxelCell} (built on demand)."""
        means = self._means
        covs = self._covs
        out = {}
        for i, c in enumerate(self._coords):
            out[tuple(int(v) for v in c)] = VoxelCell(
                n=int(self._counts[i]),
                mean=None if means is None else means[i].copy(),
                cov=None if covs is None else covs[i].copy(),
            )
        return out


def voxel_partition(cloud: PointCloud, cell_size: float) -> VoxelGrid:
    return VoxelGrid(cloud, cell_size)


def voxel_stats(grid: VoxelGrid) -> VoxelGrid:
    """Populate per-cell mean and 1/n covariance in place and return the grid."""
    return grid.compute_stats()
