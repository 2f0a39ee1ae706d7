"""Learned image codecs at desk scale and classifier-based bias evaluation."""

__version__ = "0.1.0"
