"""Floating car data to road segment speeds: spot binning, spatial join,
free-flow estimation, confidence filtering and comparison tools."""

__version__ = "0.1.0"
