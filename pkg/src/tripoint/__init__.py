"""Point cloud completion with tri-plane canonical coordinate maps."""

__version__ = "0.1.0"
