"""Entropy-stable DG solvers, POD reduced-order models, and
entropy-preserving hyper-reduction for nonlinear conservation laws."""

__version__ = "0.1.0"
