"""Polarization-aware antenna selection for near-field XL-MIMO joint radar and communication."""

__version__ = "0.1.0"
