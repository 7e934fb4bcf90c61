"""Polarity-aware denoising for text sentiment transfer."""

__version__ = "0.1.0"
