"""Economy-driven grid scheduling of MEG wavelet cross-correlation sweeps."""

__version__ = "0.1.0"
