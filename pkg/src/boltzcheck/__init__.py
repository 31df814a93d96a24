"""Numerical checks of weak-form inequalities for the non-cutoff Boltzmann collision operator."""

__version__ = "0.1.0"
