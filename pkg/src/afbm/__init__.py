"""Analytic fractional Brownian motion: sampling, iterated integrals and rough equations."""

__version__ = "0.1.0"
