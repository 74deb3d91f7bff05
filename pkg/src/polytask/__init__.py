"""Polyhedral auto-parallelization of affine loop nests into task programs."""

__version__ = "0.1.0"
