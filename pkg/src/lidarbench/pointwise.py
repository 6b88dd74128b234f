"""Point-wise scan aligners: point-to-point ICP, distribution-to-distribution
G-ICP, voxelized G-ICP, and the normal-distributions transform.

All four share conventions:
  * the returned pose maps the SOURCE cloud into the TARGET frame
  * iterations update the pose on the left, T <- exp(delta) o T
  * convergence when the update twist norm drops below transform_epsilon
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateCorrespondencesError,
    InsufficientPointsError,
    InsufficientStructureError,
    NoOverlapError,
)
from .geometry import Pose, PointCloud, se3_exp, se3_inverse, se3_compose, se3_log
from .spatial import VoxelGrid


@dataclass
class RegistrationParams:
    """Shared knobs for the point-wise aligners.

    Defaults: 20 neighbors for per-point covariances, cells of 3.0 m for the
    voxel methods (outdoor scale; shrink for desk-scale scenes), at least 4
    points before a cell contributes a Gaussian.
    """

    max_iterations: int = 64
    transform_epsilon: float = 1e-6
    max_correspondence_distance: float = 2.0
    voxel_resolution: float = 3.0
    covariance_k: int = 20
    cov_regularization: float = 1e-3
    min_points_per_cell: int = 4

    def __post_init__(self):
        if min(self.max_iterations, self.covariance_k) < 1:
            raise ValueError("max_iterations and covariance_k must be >= 1")
        if min(
            self.transform_epsilon,
            self.max_correspondence_distance,
            self.voxel_resolution,
            self.cov_regularization,
        ) <= 0.0:
            raise ValueError("thresholds must be positive")
        if self.min_points_per_cell < 4:
            raise ValueError("min_points_per_cell must be >= 4")


@dataclass
class RegistrationResult:
    """Estimated pose plus convergence diagnostics."""

    pose: Pose
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)
    fitness: float = float("nan")
    condition_number: float = float("nan")
    diagnostics: dict = field(default_factory=dict)


def svd_rigid_solve(source: np.ndarray, target: np.ndarray) -> Pose:
    """Closed-form rigid transform minimizing sum ||target_i - (R source_i + t)||^2.

    Decenter both sets, SVD the cross-covariance, correct a possible
    reflection, then t = mean(target) - R mean(source).
    """
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(tgt):
        raise ValueError("source/target pair counts differ")
    if len(src) < 3:
        raise DegenerateCorrespondencesError(f"{len(src)} pairs, need >= 3")
    sc = src.mean(axis=0)
    tc = tgt.mean(axis=0)
    H = (src - sc).T @ (tgt - tc)
    U, S, Vt = np.linalg.svd(H)
    if S[1] <= 1e-12 * max(S[0], 1e-300):
        raise DegenerateCorrespondencesError("correspondences are collinear")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return Pose(R, tc - R @ sc)


def _skew_batch(p: np.ndarray) -> np.ndarray:
    S = np.zeros((len(p), 3, 3))
    S[:, 0, 1] = -p[:, 2]
    S[:, 0, 2] = p[:, 1]
    S[:, 1, 0] = p[:, 2]
    S[:, 1, 2] = -p[:, 0]
    S[:, 2, 0] = -p[:, 1]
    S[:, 2, 1] = p[:, 0]
    return S


def point_twist_jacobian(p: np.ndarray) -> np.ndarray:
    """d(exp(xi) p)/d(xi) at xi = 0 for world points p: (N, 3, 6) = [I | -skew(p)]."""
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    J = np.zeros((len(p), 3, 6))
    J[:, 0, 0] = J[:, 1, 1] = J[:, 2, 2] = 1.0
    J[:, :, 3:] = -_skew_batch(p)
    return J


def _solve_normal_equations(H, g, cond_threshold=1e8):
    """Solve H delta = -g, adding Levenberg damping when H is ill-conditioned.

    Returns (delta, condition_number, damped).
    """
    s = np.linalg.svd(H, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0.0 else math.inf
    lam = 0.0
    damped = False
    if not math.isfinite(cond) or cond > cond_threshold:
        lam = max(float(s[0]), 1e-12) / cond_threshold
        damped = True
    for _ in range(40):
        try:
            delta = np.linalg.solve(H + lam * np.eye(6), -g)
        except np.linalg.LinAlgError:
            delta = None
        if delta is not None and np.isfinite(delta).all():
            return delta, cond, damped
        lam = max(lam * 10.0, 1e-12)
        damped = True
    raise DegenerateCorrespondencesError("normal equations are unsolvable")


def _batch_inverse_spd(M: np.ndarray):
    """Invert a stack of 3x3 SPD matrices; jitter any singular ones.

    Returns (inverses, fallback_used).
    """
    try:
        return np.linalg.inv(M), False
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-9 * np.trace(M, axis1=1, axis2=2).max()
    return np.linalg.inv(M + jitter * np.eye(3)), True


def point_covariances(cloud: PointCloud, k: int, eps: float) -> np.ndarray:
    """Per-point neighbor covariances, eigenvalue-floored for invertibility.

    Each point's covariance comes from its k nearest neighbors (the point
    itself included), 1/n normalization. Eigenvalues are clamped from below
    at eps times the largest one so flat neighborhoods stay invertible while
    keeping their plane normal.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(cloud)
    if n < k:
        raise InsufficientPointsError(f"cloud has {n} points, covariance needs {k}")
    tree = cKDTree(cloud.xyz)
    _, idx = tree.query(cloud.xyz, k=k)
    idx = np.atleast_2d(idx)
    neigh = cloud.xyz[idx]                     # (n, k, 3)
    mean = neigh.mean(axis=1, keepdims=True)
    centered = neigh - mean
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    lam, vec = np.linalg.eigh(cov)
    lam_max = np.maximum(lam[:, -1], 1e-12)
    lam = np.maximum(lam, eps * lam_max[:, None])
    return np.einsum("nij,nj,nkj->nik", vec, lam, vec)


def _finalize(
    T: Pose,
    source: PointCloud,
    tree: cKDTree,
    gate: float,
    converged: bool,
    cost_history: list[float],
    cond: float,
    diagnostics: dict,
) -> RegistrationResult:
    P = T.apply(source.xyz)
    d, _ = tree.query(P)
    inl = d[d < gate]
    fitness = float(inl.mean()) if len(inl) else float("nan")
    return RegistrationResult(
        pose=T,
        iterations=len(cost_history),
        converged=converged,
        cost_history=cost_history,
        fitness=fitness,
        condition_number=cond,
        diagnostics=diagnostics,
    )


def icp_align(
    source: PointCloud, target: PointCloud, init: Pose, params: RegistrationParams
) -> RegistrationResult:
    """Classic point-to-point ICP: alternate nearest-neighbor association and
    the closed-form SVD solve until the pose update stalls."""
    if len(source) < 3 or len(target) < 3:
        raise InsufficientPointsError("ICP needs at least 3 points per cloud")
    tree = cKDTree(target.xyz)
    gate = params.max_correspondence_distance
    T = init
    cost_history: list[float] = []
    converged = False
    cond = float("nan")
    for _ in range(params.max_iterations):
        P = T.apply(source.xyz)
        d, j = tree.query(P)
        mask = d < gate
        if not mask.any():
            raise NoOverlapError("no correspondences within the distance gate")
        src = source.xyz[mask]
        tgt = target.xyz[j[mask]]
        T_new = svd_rigid_solve(src, tgt)
        delta = se3_log(se3_compose(T_new, se3_inverse(T)))
        T = T_new
        r = tgt - T.apply(src)
        cost_history.append(0.5 * float(np.sum(r * r)))
        if np.linalg.norm(delta) < params.transform_epsilon:
            converged = True
            break
    # degeneracy diagnostic: conditioning of the unweighted normal matrix
    P = T.apply(source.xyz)
    d, j = tree.query(P)
    mask = d < gate
    if mask.any():
        J = point_twist_jacobian(P[mask])
        H = np.einsum("nia,nib->ab", J, J)
        s = np.linalg.svd(H, compute_uv=False)
        cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    return _finalize(T, source, tree, gate, converged, cost_history, cond, {})


def _gn_align(init: Pose, params: RegistrationParams, associate, diagnostics: dict):
    """Shared damped Gauss-Newton loop over a twist.

    `associate(T)` returns (p, resid, W, weights, sign) for the current pose:
    world source points, residual vectors, per-pair 3x3 information matrices,
    scalar term weights, and the sign convention such that
    d(resid)/d(xi) = sign * point_twist_jacobian(p).
    """
    T = init
    cost_history: list[float] = []
    converged = False
    cond = float("nan")
    prev_delta = None
    for _ in range(params.max_iterations):
        p, resid, W, wts, sign = associate(T)
        J = sign * point_twist_jacobian(p)
        WJ = np.einsum("nij,njb->nib", W, J)
        H = np.einsum("nia,nib,n->ab", J, WJ, wts)
        g = np.einsum("nia,nij,nj,n->a", J, W, resid, wts)
        cost = float(np.einsum("ni,nij,nj,n->", resid, W, resid, wts))
        delta, cond, damped = _solve_normal_equations(H, g)
        if damped:
            diagnostics["levenberg_damping"] = True
        # cell/correspondence flips can trap full steps in a two-cycle;
        # stepping to the cycle midpoint breaks it
        if prev_delta is not None and float(delta @ prev_delta) < 0.0:
            delta = 0.5 * (delta + prev_delta)
        # halve the step while it increases this iteration's objective
        # (same correspondences and information matrices, pose moved)
        cost_try = cost
        for _ in range(8):
            p_try = se3_exp(delta).apply(p)
            r_try = resid + sign * (p_try - p)
            cost_try = float(np.einsum("ni,nij,nj,n->", r_try, W, r_try, wts))
            if cost_try <= cost or np.linalg.norm(delta) < params.transform_epsilon:
                break
            delta = 0.5 * delta
        T = se3_compose(se3_exp(delta), T)
        cost_history.append(cost_try)
        prev_delta = delta
        if np.linalg.norm(delta) < params.transform_epsilon:
            converged = True
            break
    return T, cost_history, converged, cond


def gicp_align(
    source: PointCloud, target: PointCloud, init: Pose, params: RegistrationParams
) -> RegistrationResult:
    """Distribution-to-distribution alignment: per-point Gaussians on both
    clouds, Mahalanobis residuals with the combined covariance, Gauss-Newton."""
    k = params.covariance_k
    if len(source) < k or len(target) < k:
        raise InsufficientPointsError(f"G-ICP needs >= covariance_k={k} points")
    C_src = point_covariances(source, k, params.cov_regularization)
    C_tgt = point_covariances(target, k, params.cov_regularization)
    tree = cKDTree(target.xyz)
    gate = params.max_correspondence_distance
    diagnostics: dict = {}

    def associate(T: Pose):
        P = T.apply(source.xyz)
        d, j = tree.query(P)
        mask = d < gate
        if not mask.any():
            raise NoOverlapError("no correspondences within the distance gate")
        R = T.rotation
        M = C_tgt[j[mask]] + np.einsum("ab,nbc,dc->nad", R, C_src[mask], R)
        W, fb = _batch_inverse_spd(M)
        if fb:
            diagnostics["covariance_regularization_fallback"] = True
        resid = target.xyz[j[mask]] - P[mask]
        return P[mask], resid, W, np.ones(mask.sum()), -1.0

    T, cost_history, converged, cond = _gn_align(init, params, associate, diagnostics)
    return _finalize(T, source, tree, gate, converged, cost_history, cond, diagnostics)


def vgicp_align(
    source: PointCloud, target: PointCloud, init: Pose, params: RegistrationParams
) -> RegistrationResult:
    """Voxelized G-ICP: target per-point Gaussians aggregated per cell (mean
    of points, mean of covariances), each source point matched to its
    containing cell and weighted by the cell population."""
    k = params.covariance_k
    if len(source) < k or len(target) < k:
        raise InsufficientPointsError(f"VGICP needs >= covariance_k={k} points")
    C_src = point_covariances(source, k, params.cov_regularization)
    C_tgt = point_covariances(target, k, params.cov_regularization)
    grid = VoxelGrid(target, params.voxel_resolution)
    if grid.n_cells < 1:
        raise NoOverlapError("target produced no populated voxel cells")
    # aggregate: mean of member points and mean of member covariances per cell
    cell_mean = grid.means
    order = grid._member_order
    group = np.repeat(np.arange(grid.n_cells), grid.counts)
    cov_sum = np.zeros((grid.n_cells, 3, 3))
    np.add.at(cov_sum, group, C_tgt[order])
    cell_cov = cov_sum / grid.counts[:, None, None]
    cell_n = grid.counts.astype(np.float64)
    tree = cKDTree(target.xyz)
    diagnostics: dict = {"cells": grid.n_cells}

    def associate(T: Pose):
        P = T.apply(source.xyz)
        ci = grid.lookup(P)
        mask = ci >= 0
        if not mask.any():
            raise NoOverlapError("no source point lands in a populated cell")
        ci = ci[mask]
        R = T.rotation
        M = cell_cov[ci] + np.einsum("ab,nbc,dc->nad", R, C_src[mask], R)
        W, fb = _batch_inverse_spd(M)
        if fb:
            diagnostics["covariance_regularization_fallback"] = True
        resid = cell_mean[ci] - P[mask]
        return P[mask], resid, W, cell_n[ci], -1.0

    T, cost_history, converged, cond = _gn_align(init, params, associate, diagnostics)
    return _finalize(
        T, source, tree, params.max_correspondence_distance,
        converged, cost_history, cond, diagnostics,
    )


def ndt_align(
    source: PointCloud, target: PointCloud, init: Pose, params: RegistrationParams
) -> RegistrationResult:
    """Normal-distributions transform: per-cell Gaussians on the target (1/n
    covariances, cells below min_points_per_cell dropped), each source point
    scored against its containing cell, damped Newton steps on the twist."""
    grid = VoxelGrid(target, params.voxel_resolution).compute_stats()
    valid = grid.counts >= params.min_points_per_cell
    if not valid.any():
        raise InsufficientStructureError(
            f"no voxel cell holds >= {params.min_points_per_cell} points"
        )
    covs = grid.covs.copy()
    # same eigenvalue floor as the per-point covariances: planar cells must
    # stay invertible without losing their normal direction
    lam, vec = np.linalg.eigh(covs)
    lam_max = np.maximum(lam[:, -1], 1e-12)
    lam = np.maximum(lam, params.cov_regularization * lam_max[:, None])
    covs = np.einsum("nij,nj,nkj->nik", vec, lam, vec)
    W_cells = np.linalg.inv(covs)
    means = grid.means
    tree = cKDTree(target.xyz)
    diagnostics = {"cells": int(valid.sum())}

    def associate(T: Pose):
        P = T.apply(source.xyz)
        ci = grid.lookup(P)
        mask = (ci >= 0) & valid[np.clip(ci, 0, len(valid) - 1)]
        if not mask.any():
            raise NoOverlapError("no source point lands in a populated cell")
        ci = ci[mask]
        resid = P[mask] - means[ci]
        return P[mask], resid, W_cells[ci], np.full(mask.sum(), 0.5), 1.0

    T, cost_history, converged, cond = _gn_align(init, params, associate, diagnostics)
    return _finalize(
        T, source, tree, params.max_correspondence_distance,
        converged, cost_history, cond, diagnostics,
    )
