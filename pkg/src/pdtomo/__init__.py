"""Parametric level-set reconstruction of partially discrete tomography images.

An image is a smooth background ``u0`` plus a constant-valued anomaly
``u1`` whose support is the positive set of a compactly supported RBF level
set. Background and shape are updated alternately: Tikhonov-regularized
LSQR for ``u0`` and trust-region Gauss-Newton for the RBF weights.
"""

from .core import Grid, Image, Kernel, ProjectionGeometry, Sinogram, pixel_centers
from .heaviside import HeavisideConfig, compute_epsilon, dirac, heaviside
from .objective import ShapeObjective, background_system, build_regularizer, compose_image
from .phantoms import PhantomSpec, add_noise_snr, make_phantom
from .projector import SparseOperator, apply, apply_adjoint, assemble
from .rbf import LevelSetModel, RbfConfig, wendland
from .solvers import ReconstructionState, SolveConfig, joint_reconstruct, lsqr, trust_region_step

__version__ = "0.1.0"

__all__ = [
    "Grid", "Image", "Kernel", "ProjectionGeometry", "Sinogram", "pixel_centers",
    "HeavisideConfig", "compute_epsilon", "dirac", "heaviside",
    "ShapeObjective", "background_system", "build_regularizer", "compose_image",
    "PhantomSpec", "add_noise_snr", "make_phantom",
    "SparseOperator", "apply", "apply_adjoint", "assemble",
    "LevelSetModel", "RbfConfig", "wendland",
    "ReconstructionState", "SolveConfig", "joint_reconstruct", "lsqr", "trust_region_step",
]
