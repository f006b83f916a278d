"""Maximal inequalities for diffusions: samplers, analytic functions, and Monte Carlo checks."""
