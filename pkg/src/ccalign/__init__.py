"""Cross-model representation alignment via canonical correlation analysis."""

__version__ = "0.1.0"
