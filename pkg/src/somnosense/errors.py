"""Exception hierarchy.

Every error carries a module-qualified ``code`` (e.g. ``"radar-effort.bounds"``)
so the CLI can emit machine-readable failures.
"""


class SomnoError(ValueError):
    """Base class for all package errors."""

    code = "somnosense.error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class InvalidBandError(SomnoError):
    code = "core-signal.invalid-band"


class TooShortError(SomnoError):
    code = "core-signal.too-short"


class NoKeypointsError(SomnoError):
    code = "core-signal.no-keypoints"


class NoSignalError(SomnoError):
    code = "core-signal.no-signal"


class DomainError(SomnoError):
    code = "thermal-airflow.domain"


class BoundsError(SomnoError):
    code = "bounds"


class ConfigError(SomnoError):
    code = "radar-effort.config"


class NoDataError(SomnoError):
    code = "radar-effort.no-data"


class InsufficientPeaksError(SomnoError):
    code = "apnea-detect.insufficient-peaks"


class NoBreathingStructureError(SomnoError):
    code = "apnea-detect.no-breathing-structure"


class NoValidDataError(SomnoError):
    code = "apnea-detect.no-valid-data"


class AlignmentError(SomnoError):
    code = "alignment"


class ScenarioError(SomnoError):
    code = "sleep-sim.scenario"


class MetricError(SomnoError):
    code = "eval-harness.division"
