"""Numerical engine for one- and two-photon absorption driven by classical and quantum light."""

__version__ = "0.1.0"
