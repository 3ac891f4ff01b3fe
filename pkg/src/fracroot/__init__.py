"""Fractional Newton and Traub root finders with closed-form fractional derivatives."""

__version__ = "1.0.0"
