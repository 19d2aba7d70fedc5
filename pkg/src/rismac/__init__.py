"""Finite-input capacity region of a MAC with an active encoder and a passive RIS encoder."""

__version__ = "0.1.0"
