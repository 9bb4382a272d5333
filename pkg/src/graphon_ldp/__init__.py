"""Numerical toolkit for triangle upper-tail large deviations of dense random graphs."""

from .errors import DomainError, SizeError
from .graphon import SimpleGraph, StepGraphon, from_graph, hom_density, triangle_density

__all__ = [
    "DomainError",
    "SizeError",
    "SimpleGraph",
    "StepGraphon",
    "from_graph",
    "hom_density",
    "triangle_density",
]
