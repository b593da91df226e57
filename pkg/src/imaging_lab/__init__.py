"""Subsampled MRI/CT reconstruction on a synthetic solution manifold."""

__version__ = "0.1.0"
