"""Explainable crypto anomaly triage pipeline."""

__version__ = "0.1.0"
