"""Figure rendering for cbsnr simulation artifacts."""

__version__ = "0.1.0"
