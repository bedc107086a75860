"""Compressed-domain face localisation on HEVC-style intra bitstreams."""

__version__ = "0.1.0"
