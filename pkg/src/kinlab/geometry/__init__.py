"""Convex domains and the ray, distance and curvature primitives built on them."""
from .curvature import SphereComparison, curvatures, principal_curvatures, rolling_radii
from .distance import Distance, distance_to_boundary, distances, foot_points
from .domains import (Ball, ConvexDomain, Ellipsoid, Superellipsoid, domain_from_spec, fibonacci_sphere,
                      random_directions)
from .integrals import (ball_distance_integral, ball_surface_integral, chord_frac_integral, chord_frac_integrals,
                        distance_integral, surface_singular_integral)
from .planar import curvature_exit_check, distance_comparison_samples
from .rays import ExitRecord, exit_record, exit_records, sample_phase_points

__all__ = [
    "Ball", "ConvexDomain", "Distance", "Ellipsoid", "ExitRecord", "SphereComparison", "Superellipsoid",
    "ball_distance_integral", "ball_surface_integral", "chord_frac_integral", "chord_frac_integrals",
    "curvature_exit_check", "curvatures", "distance_comparison_samples", "distance_integral",
    "distance_to_boundary", "distances", "domain_from_spec", "exit_record", "exit_records", "fibonacci_sphere",
    "foot_points", "principal_curvatures", "random_directions", "rolling_radii", "sample_phase_points",
    "surface_singular_integral",
]
