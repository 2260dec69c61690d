"""Harmonic maps into spiders and books: solver, frequency functionals, singular-set geometry."""
__version__ = "0.1.0"
