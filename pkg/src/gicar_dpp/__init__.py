"""Determinantal point processes on lattices and their GICAR quasi-free states."""

__version__ = "0.1.0"
