"""Stochastic lot sizing with capital flow and business overdraft."""

__version__ = "0.1.0"
