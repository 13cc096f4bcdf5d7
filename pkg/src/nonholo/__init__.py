"""Constrained Hamiltonian mechanics on momentum phase space.

Core surface: dual-number differentiation (numdiff), an expression DSL and
system-file format (dsl), pointwise projectors (geometry), the domain model
(system), constrained dynamics (dynamics), almost-Poisson brackets
(brackets), built-in benchmark systems (catalog), and a CLI (cli).
"""

from .errors import NonholoError
from .system import (
    DStarObservable,
    DStarPoint,
    Observable,
    PhasePoint,
    SystemDefinition,
)

__all__ = [
    "NonholoError",
    "SystemDefinition",
    "PhasePoint",
    "DStarPoint",
    "Observable",
    "DStarObservable",
]
