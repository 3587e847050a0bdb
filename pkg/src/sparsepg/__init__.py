"""Asynchronous proximal-gradient optimization with sparsified communication."""

from . import data, direct, engine, metrics, problem, recondition, sparsifier
from .rng import stream

__all__ = [
    "data",
    "direct",
    "engine",
    "metrics",
    "problem",
    "recondition",
    "sparsifier",
    "stream",
]

__version__ = "0.1.0"
