"""Numerical core: fields, solver, frequency analysis, singular sets and coverings."""
