"""Neuron-level probing, constrained Ward clustering and continuum scoring for classifier activations."""

__version__ = "0.1.0"
