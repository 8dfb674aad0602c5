"""Iteratively regularized Gauss-Newton reconstruction for near-field x-ray
phase contrast imaging and tomography."""

__version__ = "0.1.0"
