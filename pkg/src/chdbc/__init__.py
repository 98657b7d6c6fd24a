"""Doubly nonlinear viscous Cahn-Hilliard simulator with dynamic boundary conditions."""
__version__ = "0.1.0"
