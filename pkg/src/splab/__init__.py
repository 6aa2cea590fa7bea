"""Numerical laboratory for ground states of a singularly perturbed Schrodinger-Poisson system."""

__version__ = "0.1.0"
