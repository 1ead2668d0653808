"""Diffusion-generated cell images and mixed supervision for multi-label
classification of 4-channel fluorescence microscopy data."""

__version__ = "0.1.0"
