"""Secure SWIPT power control for cell-free massive MIMO under pilot-replay eavesdropping."""

__version__ = "0.1.0"
