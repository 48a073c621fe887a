"""Hierarchical Bayesian MAP reconstruction for 2-D diffuse optical tomography."""

from .errors import MeshError, NumericalError, ValidationError
from .forward import DOTForward, MeasurementSet, OpticalField, PhysicsConstants, add_noise
from .hypermodels import (
    DifferencePrior,
    Exponential,
    Fixed,
    InverseGamma,
    StandardGamma,
    UncorrelatedPrior,
    select_scale_from_cdf,
    update_theta,
)
from .mesh import boundary_patches, build_difference_structure, build_disk_mesh
from .phantoms import Inclusion, Phantom, rasterize, relative_error
from .solver import SolverConfig, convergence_report, ias_run

__version__ = "0.1.0"

__all__ = [
    "MeshError",
    "NumericalError",
    "ValidationError",
    "DOTForward",
    "MeasurementSet",
    "OpticalField",
    "PhysicsConstants",
    "add_noise",
    "DifferencePrior",
    "Exponential",
    "Fixed",
    "InverseGamma",
    "StandardGamma",
    "UncorrelatedPrior",
    "select_scale_from_cdf",
    "update_theta",
    "boundary_patches",
    "build_difference_structure",
    "build_disk_mesh",
    "Inclusion",
    "Phantom",
    "rasterize",
    "relative_error",
    "SolverConfig",
    "convergence_report",
    "ias_run",
]
