"""Two-dimensional domain integral equation scattering with FFT matrix-vector
products, a Calderon-type regularizer and eigenvector deflation."""

from .medium import (Background, Grid, MediumMap, ScattererSpec, circular_cylinder, grid_for,
                     homogeneous_square, layered_square, rasterize, sin_product_profile)
from .operator import DieOperator, RegularizedOperator, assemble_dense, build_fast, incident_plane_wave
from .krylov import ConvergenceRecord, KrylovConfig, gmres_restarted
from .spectral import build_deflation, deflation_radius, dense_spectrum, map_eigenvalue, topk_eigs
from .analytic import CylinderProblem, cylinder_fields

__version__ = "0.1.0"
