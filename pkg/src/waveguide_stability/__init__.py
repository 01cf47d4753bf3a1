"""Numerical lab for Hölder-stable recovery of a Schrödinger potential in a cylinder."""

__version__ = "0.1.0"
