"""Steering a historical influenza forecaster toward a contaminated season."""

__version__ = "0.1.0"
