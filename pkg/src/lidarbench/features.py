"""Curvature-based feature extraction and range-image ground segmentation.

Curvature of an in-ring point is the norm of the sum of difference vectors to
its 5 predecessors and 5 successors, normalized by neighborhood size (11,
center included) and range. High curvature above the threshold makes edge
candidates, low curvature planar candidates, selected per ring subregion.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import UnorganizedScanError
from .geometry import PointCloud
from .synth import SensorModel


@dataclass
class FeatureParams:
    subregions_per_ring: int = 6
    edge_threshold: float = 1e-3
    edges_per_subregion: int = 2
    planars_per_subregion: int = 4
    neighborhood_half_width: int = 5
    mapping_feature_multiplier: int = 10
    outlier_rejection: bool = True
    # residual weight saturates to zero at this distance (bisquare)
    weight_r0: float = 0.5
    max_iterations: int = 30
    transform_epsilon: float = 1e-7
    occlusion_gap: float = 0.3
    beam_parallel_ratio: float = 0.0002
    edge_map_cell: float = 0.2
    planar_map_cell: float = 0.4

    def __post_init__(self):
        if not 4 <= self.subregions_per_ring <= 8:
            raise ValueError("subregions_per_ring must be in [4, 8]")
        if min(self.edges_per_subregion, self.planars_per_subregion,
               self.neighborhood_half_width, self.max_iterations) < 1:
            raise ValueError("counts must be positive")


@dataclass
class FeatureSet:
    """Edge and planar feature points with their curvatures and provenance."""

    edges: np.ndarray
    planars: np.ndarray
    edge_curvature: np.ndarray
    planar_curvature: np.ndarray
    edge_ring: np.ndarray
    planar_ring: np.ndarray
    edge_index: np.ndarray
    planar_index: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_planars(self) -> int:
        return len(self.planars)

    @staticmethod
    def empty() -> "FeatureSet":
        z3 = np.zeros((0, 3))
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return FeatureSet(z3, z3.copy(), z, z.copy(), zi, zi.copy(), zi.copy(), zi.copy())


def _ring_slices(scan: PointCloud):
    if scan.ring is None:
        raise UnorganizedScanError("scan has no ring ids")
    for m in np.unique(scan.ring):
        yield m, np.flatnonzero(scan.ring == m)


def compute_curvature(scan: PointCloud, params: FeatureParams):
    """Per-point curvature and validity mask.

    Points without a full in-ring neighborhood are invalid; with outlier
    rejection on, points beside occlusion boundaries and points on surfaces
    nearly parallel to the beam are dropped as well.
    """
    h = params.neighborhood_half_width
    ns = 2 * h + 1
    curvature = np.full(len(scan), np.nan)
    valid = np.zeros(len(scan), dtype=bool)
    for _, idx in _ring_slices(scan):
        if len(idx) <= 2 * h:
            continue
        pts = scan.xyz[idx]
        rng_ = np.linalg.norm(pts, axis=1)
        # window sum of ns consecutive points, centered
        csum = np.cumsum(np.vstack([np.zeros(3), pts]), axis=0)
        win = csum[ns:] - csum[:-ns]                     # (L-2h, 3)
        center = pts[h:-h]
        num = np.linalg.norm(ns * center - win, axis=1)
        c = num / (ns * np.maximum(rng_[h:-h], 1e-12))
        curvature[idx[h:-h]] = c
        ok = np.ones(len(idx), dtype=bool)
        ok[:h] = False
        ok[-h:] = False
        if params.outlier_rejection:
            ok &= ~_occluded_mask(pts, rng_, params.occlusion_gap)
            ok &= ~_beam_parallel_mask(pts, rng_, params.beam_parallel_ratio)
        valid[idx] = ok
    return curvature, valid


def _occluded_mask(pts, rng_, gap):
    """Points on the far side of a range discontinuity (and a 5-point cushion)."""
    n = len(pts)
    mask = np.zeros(n, dtype=bool)
    d = rng_[:-1] - rng_[1:]
    for i in np.flatnonzero(d > gap):       # i farther than i+1
        mask[max(0, i - 5): i + 1] = True
    for i in np.flatnonzero(-d > gap):      # i+1 farther than i
        mask[i + 1: min(n, i + 7)] = True
    return mask


def _beam_parallel_mask(pts, rng_, ratio):
    n = len(pts)
    mask = np.zeros(n, dtype=bool)
    if n < 3:
        return mask
    gap_prev = np.sum((pts[1:-1] - pts[:-2]) ** 2, axis=1)
    gap_next = np.sum((pts[2:] - pts[1:-1]) ** 2, axis=1)
    lim = ratio * rng_[1:-1] ** 2
    mask[1:-1] = (gap_prev > lim) & (gap_next > lim)
    return mask


def extract_features(
    scan: PointCloud, params: FeatureParams, budget: str = "odometry"
) -> FeatureSet:
    """Select edge/planar points per ring subregion.

    'odometry' keeps at most 2 edges / 4 planars per subregion; 'mapping'
    allows 10x the edges and every planar candidate below the threshold.
    """
    if budget not in ("odometry", "mapping"):
        raise ValueError("budget must be 'odometry' or 'mapping'")
    curvature, valid = compute_curvature(scan, params)
    max_edges = params.edges_per_subregion
    max_planars = params.planars_per_subregion
    if budget == "mapping":
        max_edges *= params.mapping_feature_multiplier
        max_planars = None
    e_idx: list[int] = []
    p_idx: list[int] = []
    for _, idx in _ring_slices(scan):
        bounds = np.linspace(0, len(idx), params.subregions_per_ring + 1).astype(int)
        for s in range(params.subregions_per_ring):
            sub = idx[bounds[s]: bounds[s + 1]]
            sub = sub[valid[sub]]
            if len(sub) == 0:
                continue
            c = curvature[sub]
            order = sub[np.argsort(c, kind="stable")]
            c_sorted = curvature[order]
            edges = order[c_sorted > params.edge_threshold][::-1][:max_edges]
            planars = order[c_sorted < params.edge_threshold]
            if max_planars is not None:
                planars = planars[:max_planars]
            e_idx.extend(edges.tolist())
            p_idx.extend(planars.tolist())
    e = np.asarray(sorted(e_idx), dtype=np.int64)
    p = np.asarray(sorted(p_idx), dtype=np.int64)
    return FeatureSet(
        edges=scan.xyz[e],
        planars=scan.xyz[p],
        edge_curvature=curvature[e],
        planar_curvature=curvature[p],
        edge_ring=scan.ring[e],
        planar_ring=scan.ring[p],
        edge_index=e,
        planar_index=p,
    )


@dataclass
class GroundSegmentation:
    """Range-image ground mask and connected-component cluster labels."""

    range_image: np.ndarray        # (rings, azimuth bins), inf where empty
    ground_mask: np.ndarray        # per point
    cluster_id: np.ndarray         # per point, -1 for ground/too-small
    rows: np.ndarray               # per point range-image row
    cols: np.ndarray               # per point range-image column

    @property
    def n_clusters(self) -> int:
        ids = self.cluster_id[self.cluster_id >= 0]
        return len(np.unique(ids))


def ground_segment(
    scan: PointCloud,
    sensor: SensorModel,
    ground_angle_deg: float = 10.0,
    cluster_angle_deg: float = 60.0,
    min_cluster_size: int = 30,
) -> GroundSegmentation:
    """Project the scan on a range image, flag ground by the inter-ring
    vertical angle, then cluster the rest by range-image connectivity."""
    if scan.ring is None:
        raise UnorganizedScanError("ground segmentation needs ring ids")
    n_rows = sensor.ring_count
    n_cols = sensor.n_azimuth
    rng_ = np.linalg.norm(scan.xyz, axis=1)
    az = np.degrees(np.arctan2(scan.xyz[:, 1], scan.xyz[:, 0])) % 360.0
    cols = np.minimum(
        (az / sensor.azimuth_resolution_deg).astype(np.int64), n_cols - 1
    )
    rows = scan.ring.astype(np.int64)
    image = np.full((n_rows, n_cols), np.inf)
    pt_of = np.full((n_rows, n_cols), -1, dtype=np.int64)
    for i in range(len(scan)):
        r, c = rows[i], cols[i]
        if rng_[i] < image[r, c]:
            image[r, c] = rng_[i]
            pt_of[r, c] = i

    ground_px = np.zeros((n_rows, n_cols), dtype=bool)
    thr = np.radians(ground_angle_deg)
    for c in range(n_cols):
        for r in range(n_rows - 1):
            i, j = pt_of[r, c], pt_of[r + 1, c]
            if i < 0 or j < 0:
                continue
            d = scan.xyz[j] - scan.xyz[i]
            ang = abs(np.arctan2(d[2], np.hypot(d[0], d[1])))
            if ang < thr:
                ground_px[r, c] = True
                ground_px[r + 1, c] = True

    # angle-criterion clustering over the non-ground pixels
    alpha_h = np.radians(sensor.azimuth_resolution_deg)
    alpha_v = np.radians(
        (sensor.vertical_max_deg - sensor.vertical_min_deg) / (sensor.ring_count - 1)
    )
    seg_thr = np.radians(cluster_angle_deg)
    labels_px = np.full((n_rows, n_cols), -1, dtype=np.int64)
    visitable = (pt_of >= 0) & ~ground_px
    next_label = 0
    for r0 in range(n_rows):
        for c0 in range(n_cols):
            if not visitable[r0, c0] or labels_px[r0, c0] >= 0:
                continue
            queue = deque([(r0, c0)])
            labels_px[r0, c0] = next_label
            members = [(r0, c0)]
            while queue:
                r, c = queue.popleft()
                for dr, dc, alpha in ((1, 0, alpha_v), (-1, 0, alpha_v),
                                      (0, 1, alpha_h), (0, -1, alpha_h)):
                    rr, cc = r + dr, (c + dc) % n_cols
                    if not (0 <= rr < n_rows) or not visitable[rr, cc]:
                        continue
                    if labels_px[rr, cc] >= 0:
                        continue
                    d1 = max(image[r, c], image[rr, cc])
                    d2 = min(image[r, c], image[rr, cc])
                    ang = np.arctan2(
                        d2 * np.sin(alpha), d1 - d2 * np.cos(alpha)
                    )
                    if ang > seg_thr:
                        labels_px[rr, cc] = next_label
                        members.append((rr, cc))
                        queue.append((rr, cc))
            if len(members) < min_cluster_size:
                for r, c in members:
                    labels_px[r, c] = -2      # discarded
            else:
                next_label += 1

    labels_px[labels_px == -2] = -1
    ground_mask = ground_px[rows, cols] & (pt_of[rows, cols] >= 0)
    cluster_id = np.where(pt_of[rows, cols] >= 0, labels_px[rows, cols], -1)
    return GroundSegmentation(
        range_image=image,
        ground_mask=ground_mask,
        cluster_id=cluster_id,
        rows=rows,
        cols=cols,
    )
