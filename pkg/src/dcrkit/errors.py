"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract: validation problems exit
with 2, training failures with 3, model/cohort incompatibilities with 4.
"""


class DcrkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DcrkitError):
    """Malformed input, config, or file content."""


class TrainingError(DcrkitError):
    """Model fitting failed (non-convergence, unusable split, ...)."""


class CompatibilityError(DcrkitError):
    """Model and data disagree on dimensions or risk count."""


class UndefinedMetricError(DcrkitError):
    """A metric has no defined value (e.g. zero acceptable pairs)."""
