"""Pseudo-spectral simulator for a two-scale stochastic 2D Boussinesq system
driven by compensated Poisson jump noise, with the diagnostics that verify
its averaging behaviour."""

__version__ = "0.1.0"
