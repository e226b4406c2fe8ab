"""Numerical laboratory for equidistribution of backward orbits on P^1 and P^2."""

__version__ = "0.1.0"
