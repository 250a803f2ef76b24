"""Principal curvatures from the implicit shape operator, and rolling radii."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..errors import CurvatureDegenerate, DegenerateGradient, RayDegenerate
from .distance import _tangent_frame
from .domains import fibonacci_sphere

TOL_GRAD = 1e-12


@dataclass(frozen=True)
class SphereComparison:
    """Uniform interior (``r1``) and enclosing (``R1``) sphere radii."""

    r1: float
    R1: float


def curvatures(domain, q):
    """Batch principal curvatures ``(k1, k2)`` with ``k1 <= k2``.

    The shape operator is the tangential block of ``hess phi / |grad phi|``.
    """
    q = np.asarray(q, dtype=float)
    shape = q.shape[:-1]
    q = q.reshape(-1, 3)
    g = domain.grad(q)
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn < TOL_GRAD):
        raise DegenerateGradient("vanishing gradient on the boundary")
    t1, t2 = _tangent_frame(g / gn[:, None])
    T = np.stack([t1, t2], axis=2)
    W = np.einsum("nia,nij,njb->nab", T, domain.hess(q), T) / gn[:, None, None]
    k = np.linalg.eigvalsh(W)
    return k[:, 0].reshape(shape), k[:, 1].reshape(shape)


def principal_curvatures(domain, q):
    """Principal curvatures ``(k1, k2)`` at a boundary point ``q``."""
    q = np.asarray(q, dtype=float).reshape(3)
    gn = np.linalg.norm(domain.grad(q))
    if abs(domain.phi(q)) > domain.tol_surface * max(1.0, gn):
        raise RayDegenerate("point is not on the boundary")
    k1, k2 = curvatures(domain, q[None])
    return float(k1[0]), float(k2[0])


def _direction(ang):
    th, ph = ang
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def rolling_radii(domain, boundary_samples: int = 2000, polish: bool = True) -> SphereComparison:
    """Enclosing radius ``1/min k1`` and rolling radius ``1/max k2``.

    Extremes over the sampled boundary points are refined by a local
    search in the direction parametrisation (``polish``), so the sampled
    optimum does not understate ``R1``.
    """
    if boundary_samples < 100:
        raise ValueError("rolling_radii needs at least 100 boundary samples")
    dirs = fibonacci_sphere(boundary_samples)
    q = domain.boundary_from_directions(dirs)
    k1, k2 = curvatures(domain, q)
    if np.any(k1 <= 0):
        raise CurvatureDegenerate("non-positive principal curvature sampled")
    kmin, kmax = float(k1.min()), float(k2.max())
    if polish:
        def curv(ang, which):
            u = _direction(ang)
            qq = domain.boundary_from_directions(u[None])
            return curvatures(domain, qq)[which][0]

        def start(u):
            return [np.arccos(np.clip(u[2], -1, 1)), np.arctan2(u[1], u[0])]

        opts = {"xatol": 1e-9, "fatol": 1e-14, "maxiter": 2000}
        r = minimize(lambda a: curv(a, 0), start(dirs[np.argmin(k1)]), method="Nelder-Mead", options=opts)
        kmin = min(kmin, float(r.fun))
        r = minimize(lambda a: -curv(a, 1), start(dirs[np.argmax(k2)]), method="Nelder-Mead", options=opts)
        kmax = max(kmax, -float(r.fun))
    return SphereComparison(r1=1.0 / kmax, R1=1.0 / kmin)
