"""Equivariant splitting for self-supervised linear inverse problems."""

__version__ = "0.1.0"
