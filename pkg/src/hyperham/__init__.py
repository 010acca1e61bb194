"""Quaternionic and Clifford integrable systems and hyperhamiltonian dynamics."""

__version__ = "0.1.0"
