"""Global sensitivity analysis for map-valued models."""

__version__ = "0.1.0"
