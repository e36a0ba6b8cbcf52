"""Numerics for the self-tuned Curie-Weiss model of self-organized criticality."""

__version__ = "0.1.0"
