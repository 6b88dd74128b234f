"""Trajectory and environment metrics: relative pose error, RMSE, inter-frame
motion magnitude, dynamic-object density, skymask mean elevation angle, and
IQR outlier classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateRotationError,
    EmptyInputError,
    InsufficientDataError,
    LabelAlignmentError,
    NoOverlapError,
    ValidationError,
)
from .geometry import Pose, PointCloud, rotation_angle, se3_compose, se3_inverse, se3_log
from .trajectory import Trajectory

LABEL_OTHER = 0
LABEL_CAR = 1
LABEL_BUS = 2
LABEL_NAMES = {LABEL_OTHER: "other", LABEL_CAR: "car", LABEL_BUS: "bus"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


@dataclass
class LabelSet:
    """Per-point semantic classes restricted to {car, bus, other}."""

    per_point: np.ndarray

    def __post_init__(self):
        self.per_point = np.asarray(self.per_point, dtype=np.int32).reshape(-1)
        bad = ~np.isin(self.per_point, list(LABEL_NAMES))
        if bad.any():
            raise ValidationError(f"unknown label codes: {set(self.per_point[bad])}")

    @property
    def n_car(self) -> int:
        return int(np.count_nonzero(self.per_point == LABEL_CAR))

    @property
    def n_bus(self) -> int:
        return int(np.count_nonzero(self.per_point == LABEL_BUS))

    @property
    def n_total(self) -> int:
        return len(self.per_point)


@dataclass
class SkyMask:
    """Building elevation angle per azimuth bin, equally spaced over [0, 360)."""

    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuth_deg, dtype=np.float64).reshape(-1)
        el = np.asarray(self.elevation_deg, dtype=np.float64).reshape(-1)
        if len(az) == 0 or len(az) != len(el):
            raise ValidationError("skymask needs matching, non-empty azimuth/elevation")
        expect = np.arange(len(az)) * (360.0 / len(az))
        if np.abs(az - expect).max() > 1e-6:
            raise ValidationError("azimuths must be equally spaced covering [0, 360)")
        if el.min() < 0.0 or el.max() > 90.0:
            raise ValidationError("elevations must lie in [0, 90] degrees")
        self.azimuth_deg = az
        self.elevation_deg = el

    @property
    def n_bins(self) -> int:
        return len(self.azimuth_deg)


@dataclass
class RpeSeries:
    """Per-pair relative pose errors between matched trajectories."""

    i: np.ndarray
    j: np.ndarray
    translation_error: np.ndarray   # meters
    rotation_error: np.ndarray      # degrees


def align_timestamps(est: Trajectory, gt: Trajectory, tol: float):
    """Greedy nearest-timestamp matching; each gt pose used at most once.

    Returns an (K, 2) array of (est_index, gt_index) pairs.
    """
    if len(est) == 0 or len(gt) == 0:
        raise EmptyInputError("cannot match empty trajectories")
    ts_e = est.timestamps
    ts_g = gt.timestamps
    taken = np.zeros(len(ts_g), dtype=bool)
    pairs = []
    for i, t in enumerate(ts_e):
        k = int(np.searchsorted(ts_g, t))
        best = None
        for c in (k - 1, k, k + 1):
            if 0 <= c < len(ts_g) and not taken[c]:
                dt = abs(ts_g[c] - t)
                if dt <= tol and (best is None or dt < best[1]):
                    best = (c, dt)
        if best is not None:
            taken[best[0]] = True
            pairs.append((i, best[0]))
    if not pairs:
        raise NoOverlapError("no timestamps match within tolerance")
    return np.asarray(pairs, dtype=np.int64)


def rpe(est: Trajectory, gt: Trajectory, delta: int = 1) -> RpeSeries:
    """Relative pose error over a fixed frame step.

    For each index i with j = i + delta, the error element is
    (gt_i^-1 gt_j)^-1 (est_i^-1 est_j); translation error is the norm of its
    translation, rotation error the angle of its rotation in degrees.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if len(est) != len(gt):
        raise ValueError("rpe expects matched trajectories of equal length")
    n = len(est)
    if n < delta + 1:
        raise InsufficientDataError(f"need at least delta+1={delta + 1} poses, got {n}")
    pe = est.poses
    pg = gt.poses
    ii, jj, terr, rerr = [], [], [], []
    for i in range(n - delta):
        j = i + delta
        rel_gt = se3_compose(se3_inverse(pg[i]), pg[j])
        rel_est = se3_compose(se3_inverse(pe[i]), pe[j])
        err = se3_compose(se3_inverse(rel_gt), rel_est)
        ii.append(i)
        jj.append(j)
        terr.append(np.linalg.norm(err.translation))
        rerr.append(np.degrees(rotation_angle(err.rotation)))
    return RpeSeries(
        i=np.asarray(ii), j=np.asarray(jj),
        translation_error=np.asarray(terr), rotation_error=np.asarray(rerr),
    )


def rmse(errors) -> float:
    """Root mean square of a series."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if len(e) == 0:
        raise EmptyInputError("rmse of an empty series")
    return float(np.sqrt(np.mean(e * e)))


def motion_difference(traj: Trajectory, rotation_weight: float = 1.0):
    """Norm of the 6-twist of each consecutive relative pose.

    Follows the source formula verbatim: translation (meters) and rotation
    (radians) share one Euclidean norm. rotation_weight scales the rotational
    half for callers who want unit-consistent values. Near-pi relative
    rotations cannot be logged; those entries come back NaN with a flag.

    Returns (values, flagged) arrays of length len(traj) - 1.
    """
    if len(traj) < 2:
        raise InsufficientDataError("motion difference needs at least 2 poses")
    poses = traj.poses
    vals = np.empty(len(poses) - 1)
    flagged = np.zeros(len(poses) - 1, dtype=bool)
    for k in range(len(poses) - 1):
        rel = se3_compose(se3_inverse(poses[k]), poses[k + 1])
        try:
            xi = se3_log(rel)
            xi[3:] *= rotation_weight
            vals[k] = np.linalg.norm(xi)
        except DegenerateRotationError:
            vals[k] = np.nan
            flagged[k] = True
    return vals, flagged


def dynamic_density(scan: PointCloud | None, labels: LabelSet) -> float:
    """Percentage of points labeled car or bus."""
    if scan is not None and len(scan) != labels.n_total:
        raise LabelAlignmentError(
            f"scan has {len(scan)} points but labels cover {labels.n_total}"
        )
    if labels.n_total == 0:
        raise EmptyInputError("labels cover no points")
    return 100.0 * (labels.n_car + labels.n_bus) / labels.n_total


def skymask_mea(mask: SkyMask) -> float:
    """Mean elevation angle over all azimuth bins, degrees."""
    return float(mask.elevation_deg.mean())


def iqr_outliers(values):
    """Flag values above Q3 + 1.5 IQR (quartiles by linear interpolation).

    Returns (flags, threshold).
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(v) < 4:
        raise InsufficientDataError("IQR classification needs at least 4 values")
    q1, q3 = np.percentile(v, [25.0, 75.0])
    threshold = q3 + 1.5 * (q3 - q1)
    return v > threshold, float(threshold)


@dataclass
class MethodEval:
    """Evaluation block for one method against the shared ground truth."""

    name: str
    rpe_series: RpeSeries
    translation_rmse_m: float
    translation_mean_m: float
    rotation_rmse_deg: float
    rotation_mean_deg: float
    outlier_frames: list[int]
    outlier_threshold_m: float


@dataclass
class EvalReport:
    """All metric series for a benchmark run; factor sections are optional
    and None when their inputs were not supplied (absent, not zero)."""

    methods: dict[str, MethodEval]
    delta: int
    motion_difference: np.ndarray | None = None
    motion_flagged: np.ndarray | None = None
    dynamic_density_pct: np.ndarray | None = None
    skymask_mea_deg: np.ndarray | None = None


def build_report(
    trajectories: dict[str, Trajectory],
    gt: Trajectory,
    scans=None,
    labels=None,
    skymasks=None,
    delta: int = 1,
    timestamp_tol: float = 0.05,
) -> EvalReport:
    """Assemble RPE statistics per method plus the optional factor series."""
    methods: dict[str, MethodEval] = {}
    for name, est in trajectories.items():
        pairs = align_timestamps(est, gt, timestamp_tol)
        sub_est = Trajectory.from_poses(
            [est.poses[i] for i, _ in pairs], [est.timestamps[i] for i, _ in pairs]
        )
        sub_gt = Trajectory.from_poses(
            [gt.poses[j] for _, j in pairs], [est.timestamps[i] for i, _ in pairs]
        )
        series = rpe(sub_est, sub_gt, delta)
        terr = series.translation_error
        rerr = series.rotation_error
        try:
            flags, thr = iqr_outliers(terr)
            outliers = [int(series.i[k]) for k in np.flatnonzero(flags)]
        except InsufficientDataError:
            outliers, thr = [], float("nan")
        methods[name] = MethodEval(
            name=name,
            rpe_series=series,
            translation_rmse_m=rmse(terr),
            translation_mean_m=float(np.abs(terr).mean()),
            rotation_rmse_deg=rmse(rerr),
            rotation_mean_deg=float(np.abs(rerr).mean()),
            outlier_frames=outliers,
            outlier_threshold_m=thr,
        )
    report = EvalReport(methods=methods, delta=delta)
    if len(gt) >= 2:
        report.motion_difference, report.motion_flagged = motion_difference(gt)
    if labels is not None:
        scan_list = scans if scans is not None else [None] * len(labels)
        report.dynamic_density_pct = np.array(
            [dynamic_density(s, l) for s, l in zip(scan_list, labels)]
        )
    if skymasks is not None:
        if isinstance(skymasks, SkyMask):
            skymasks = [skymasks]
        report.skymask_mea_deg = np.array([skymask_mea(m) for m in skymasks])
    return report
