"""Simulation and analysis toolkit for branching random walks on the integers
with breeding potential beta |x|^p."""

__version__ = "0.1.0"
