"""Calibration of classifier scores to posterior probabilities, with a simulation benchmark."""

__version__ = "0.1.0"
