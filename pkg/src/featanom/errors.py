"""Typed errors raised across the toolkit.

Errors that can name an offending image carry its id in ``image_id`` so
callers (and error messages) can point at the exact record in an archive.
"""


class FeatanomError(Exception):
    """Base class for all toolkit errors."""


class MissingManifest(FeatanomError):
    """Archive directory has no manifest file."""


class FormatError(FeatanomError):
    """Archive or model file is structurally invalid."""


class ShapeMismatch(FeatanomError):
    """A tensor's shape disagrees with the dataset-level declaration."""

    def __init__(self, image_id, message=""):
        self.image_id = image_id
        super().__init__(message or f"shape mismatch for image {image_id!r}")


class NonFiniteValue(FeatanomError):
    """A tensor contains NaN or Inf."""

    def __init__(self, image_id, message=""):
        self.image_id = image_id
        super().__init__(message or f"non-finite values in image {image_id!r}")


class UnknownLevel(FeatanomError):
    """A requested feature level is not present."""


class DimensionMismatch(FeatanomError):
    """Vector/matrix dimensions do not line up."""


class EmptyInput(FeatanomError):
    """An operation received zero samples or zero features."""


class UnknownCategory(FeatanomError):
    """Requested category is absent from a policy config or dataset."""


class MalformedTree(FeatanomError):
    """A dataset directory does not follow the expected layout."""


class UndefinedMetric(FeatanomError):
    """A metric is undefined for the given input (single class, one grid point)."""
