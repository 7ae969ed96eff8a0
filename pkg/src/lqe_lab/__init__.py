"""SNR-profile link quality estimation, rate adaptation and routing."""
__version__ = "0.1.0"
