"""hsx: pooled per-layer hidden-state extraction from causal language models."""

from .extract import ExtractionJob, ExtractionReport, extract

__all__ = ["ExtractionJob", "ExtractionReport", "extract"]
__version__ = "0.1.0"
