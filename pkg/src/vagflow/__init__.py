"""Nonlinear VAG finite-volume solver for degenerate parabolic equations."""

from .mesh import Mesh, MeshError, MeshParseError, generate_structured, parse_mesh, read_mesh
from .physics import HeteroModel, Model, Potential, TensorField, make_model
from .assembly import DirichletBC, Discretization, DofVector, FluxScheme, PressureProblem, Problem

__all__ = [
    "Mesh",
    "MeshError",
    "MeshParseError",
    "generate_structured",
    "parse_mesh",
    "read_mesh",
    "HeteroModel",
    "Model",
    "Potential",
    "TensorField",
    "make_model",
    "DirichletBC",
    "Discretization",
    "DofVector",
    "FluxScheme",
    "PressureProblem",
    "Problem",
]

__version__ = "0.1.0"
