"""Lyapunov functions from generator discretizations of stable flows."""

__version__ = "0.1.0"
