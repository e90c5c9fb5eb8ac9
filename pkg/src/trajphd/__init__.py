"""Gaussian-mixture trajectory PHD filtering, simulation and evaluation."""
__version__ = "0.1.0"
