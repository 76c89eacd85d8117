"""Marker-based UAV localisation from a single ground camera."""

__version__ = "0.1.0"
