"""Numerical companion for a homoclinic-tangle example with entropy but no exponent."""

__version__ = "0.1.0"
