"""Quality assessment of bicycle infrastructure network data."""

__version__ = "0.1.0"
