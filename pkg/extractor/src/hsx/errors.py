"""Error classes raised by the extractor."""

from __future__ import annotations


class HsxError(Exception):
    """Base class for extractor failures."""


class DatasetError(HsxError):
    """The dataset file cannot be parsed or violates its contract."""


class ContainerError(HsxError):
    """The assembled records cannot form a valid container."""


class ExtractionError(HsxError):
    """Model loading or inference failed."""
