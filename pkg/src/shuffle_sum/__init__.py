"""Simulator for differentially private real summation in the shuffle model."""

__version__ = "0.1.0"
