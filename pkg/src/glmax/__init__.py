"""glmax: simulation and numerical-analysis lab for the maximum of
two-dimensional Ginzburg-Landau gradient fields."""

__version__ = "0.1.0"
