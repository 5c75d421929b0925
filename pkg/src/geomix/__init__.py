"""Gaussian-mixture models for text-based geolocation and lexical
dialectology, with a desk-scale synthetic verification harness."""

__version__ = "0.1.0"
