"""Accelerated cyclic reduction for block tridiagonal systems from 3D elliptic PDEs."""

__version__ = "0.1.0"
