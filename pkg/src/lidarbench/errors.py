"""Exception hierarchy for the whole package.

Every failure mode named by a public contract maps to one class here so
callers can catch precisely (e.g. the odometry pipeline treats any
RegistrationError as a diverged frame and keeps going).
"""


class LidarBenchError(Exception):
    """Base class for all package errors."""


class EmptyInputError(LidarBenchError):
    """An operation received an empty cloud/series it cannot work on."""


class RegistrationError(LidarBenchError):
    """Base for recoverable registration failures (frame can be skipped)."""


class NoOverlapError(RegistrationError):
    """No correspondences found within the distance gate / voxel grid."""


class DegenerateCorrespondencesError(RegistrationError):
    """Correspondence geometry does not constrain a rigid transform."""


class InsufficientPointsError(RegistrationError):
    """Cloud smaller than the neighborhood size an estimator requires."""


class InsufficientStructureError(RegistrationError):
    """Voxel model has no cell populated enough to be usable."""


class UnderconstrainedError(RegistrationError):
    """Feature matching left fewer than 6 constrained degrees of freedom."""

    def __init__(self, msg, condition_number=None, n_correspondences=None):
        super().__init__(msg)
        self.condition_number = condition_number
        self.n_correspondences = n_correspondences


class DegenerateRotationError(LidarBenchError):
    """Rotation too close to pi for a single-branch logarithm."""


class DegenerateLineError(LidarBenchError):
    """Two identical points cannot define a line."""


class DegeneratePlaneError(LidarBenchError):
    """Three collinear points cannot define a plane."""


class UnorganizedScanError(LidarBenchError):
    """Operation requires ring ids / acquisition order the scan lacks."""


class InsufficientDataError(LidarBenchError):
    """Series too short for the requested statistic."""


class LabelAlignmentError(LidarBenchError):
    """Per-point labels do not line up with the cloud."""


class ParseError(LidarBenchError):
    """Malformed file content. Carries a location when known."""

    def __init__(self, msg, *, path=None, line=None, offset=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte {offset}")
        super().__init__(f"{msg} ({', '.join(loc)})" if loc else msg)
        self.path = path
        self.line = line
        self.offset = offset


class ValidationError(LidarBenchError):
    """Well-formed input violating a documented constraint (ranges, spacing)."""


class ConfigError(LidarBenchError):
    """Run configuration failed schema validation."""
