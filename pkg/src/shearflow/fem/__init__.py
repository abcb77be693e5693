"""Taylor-Hood discretization of the floored power-law system."""
from .assembly import (FlowProblem, PowerLaw, assemble_jacobian, assemble_residual,
                       export_matrix_market, stokes_matrix, strain_rate, stress)
from .quadrature import triangle_rule
from .space import TaylorHoodSpace

__all__ = ["FlowProblem", "PowerLaw", "TaylorHoodSpace", "assemble_jacobian",
           "assemble_residual", "export_matrix_market", "stokes_matrix", "strain_rate",
           "stress", "triangle_rule"]
