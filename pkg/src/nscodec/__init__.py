"""Learned wideband speech codec: conv autoencoder, softmax quantizer and range coder."""

__version__ = "0.1.0"
