"""Capacity-conditioned recurrent GAN for augmenting battery cycling data."""

__version__ = "0.1.0"
