"""Solver and audit suite for the classical Neumann problem of mixed Hessian equations."""
__version__ = "0.1.0"
