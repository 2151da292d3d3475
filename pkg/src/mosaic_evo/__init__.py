"""Crack-network mosaics: counts, mean-field ODE, torus simulation, fits."""

__version__ = "0.1.0"
