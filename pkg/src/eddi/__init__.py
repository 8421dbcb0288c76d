"""Partial VAE with sequential information-maximising variable acquisition."""

__version__ = "0.1.0"
