"""Geodesic flow, X-ray transforms and lens data on asymptotically conic manifolds."""

from .boundary import Circle, Sphere, Torus, TrigPoly, make_boundary
from .dynamics import (boundary_flow, cone_solution, constraint, entry_point, integrate,
                       integrate_entry, linearized_difference, rescaled_field)
from .geometry import (CollarBump, ConformalBump, ExactCone, PerturbedConic, PerturbedMetric,
                       TensorBump, WarpedProduct, curvature_decay_rates, metric_at,
                       sectional_curvature)
from .jacobi import conjugate_scan, jacobi_growth_check, jacobi_integrate
from .lens import (bdf_change_gap, large_eta_scattering, lens_variation, perturbative_identities,
                   renormalized_length, scattering_map)
from .profiles import RadialProfile
from .tensors import CollarField, gauge_normalize
from .transform import boundary_pi_transform, xray

__all__ = [
    "Circle", "Sphere", "Torus", "TrigPoly", "make_boundary",
    "boundary_flow", "cone_solution", "constraint", "entry_point", "integrate", "integrate_entry",
    "linearized_difference", "rescaled_field",
    "CollarBump", "ConformalBump", "ExactCone", "PerturbedConic", "PerturbedMetric", "TensorBump",
    "WarpedProduct", "curvature_decay_rates", "metric_at", "sectional_curvature",
    "conjugate_scan", "jacobi_growth_check", "jacobi_integrate",
    "bdf_change_gap", "large_eta_scattering", "lens_variation", "perturbative_identities",
    "renormalized_length", "scattering_map",
    "RadialProfile", "CollarField", "gauge_normalize", "boundary_pi_transform", "xray",
]
