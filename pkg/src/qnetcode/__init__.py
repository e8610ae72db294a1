"""Exact simulation and compilation of distributed two-qubit gates over Bell-pair networks."""
__version__ = "0.1.0"
