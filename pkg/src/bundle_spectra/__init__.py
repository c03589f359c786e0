"""Spectra of rough Laplacians on vector bundles and of twisted net Laplacians."""

from .bundle import (Bundle, curvature_report, flat_bundle_from_representation, gauge_transform,
                     landau_line_bundle, rotation, sphere_tangent_bundle, trivial_bundle)
from .errors import FrameError, NumericalError, ValidationError
from .frames import Frame, FrameConfig, build_frame, build_frames
from .geometry import (FineMesh, ball, build_circle, build_flat_torus, build_mesh, build_sphere, diameter,
                       geodesic_distance, geodesic_midpoint)
from .harness import CompareConfig, ComparisonReport, SweepSpec, run_compare, sweep
from .holonomy import check_holonomy_bounds, estimate_alpha, fundamental_loops, tree_gauge
from .netdisc import Discretization, epsilon_net, validate
from .spectral import SpectrumResult, SymmetricOperator, eigs, neumann_ball_operator, rough_laplacian
from .twisted import (apply_DA, assemble_twisted, build_connection, build_potential, discretize_section,
                      smooth)

__all__ = [
    "Bundle", "CompareConfig", "ComparisonReport", "Discretization", "FineMesh", "Frame", "FrameConfig",
    "FrameError", "NumericalError", "SpectrumResult", "SweepSpec", "SymmetricOperator", "ValidationError",
    "apply_DA", "assemble_twisted", "ball", "build_circle", "build_connection", "build_flat_torus", "build_frame",
    "build_frames", "build_mesh", "build_potential", "build_sphere", "check_holonomy_bounds", "curvature_report",
    "diameter", "discretize_section", "eigs", "epsilon_net", "estimate_alpha", "flat_bundle_from_representation",
    "fundamental_loops", "gauge_transform", "geodesic_distance", "geodesic_midpoint", "landau_line_bundle",
    "neumann_ball_operator", "rotation", "rough_laplacian", "run_compare", "smooth", "sphere_tangent_bundle",
    "sweep", "tree_gauge", "trivial_bundle", "validate",
]
