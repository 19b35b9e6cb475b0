"""Desk-scale locomotion lab for a top-heavy planar biped."""

__version__ = "0.1.0"
