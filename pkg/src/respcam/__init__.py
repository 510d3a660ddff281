"""respcam: camera-based respiration estimation and benchmarking."""

__version__ = "0.1.0"
