"""Elastic evolution of foliated shapes and recovery of atrophy-like forces."""

__version__ = "0.1.0"
