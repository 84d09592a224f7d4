"""Numerical study of equilibration by dephasing in small spin chains."""

__version__ = "0.1.0"
