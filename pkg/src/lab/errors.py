"""
Exception types shared by the numerical modules.

Every error carries the process exit code the CLI should return for it.
"""


class LabError(Exception):
    """Base class for all partition-lab errors"""
    exit_code = 1


class ConfigError(LabError):
    """Invalid configuration value; `field` names the offending entry"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class AdmissibilityError(LabError):
    """Ball leaves the domain, radius below the resolution floor, or margin too small"""


class NormalizationError(LabError):
    """Operation requires L2-normalized components"""


class EmptyMeasureError(LabError):
    """Measure has no mass where mass is required"""


class InstanceTooLargeError(LabError):
    """Input exceeds the size an exhaustive routine accepts"""


class ScalingFitError(LabError):
    """Log-log fit cannot be performed on the given samples"""


class FieldFormatError(LabError):
    """Field dump is malformed or inconsistent with its sidecar"""


class ZeroHeightError(LabError):
    """Height function vanishes at every fit_radii radius"""


class MissingArtifactError(LabError):
    """An upstream artifact a stage depends on does not exist"""
    exit_code = 3
