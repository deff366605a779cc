"""Stylometric classification of commingled texts with an
autocovariance-matched surrogate-labeling significance test."""

__version__ = "0.1.0"
