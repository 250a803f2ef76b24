"""Backward/forward exit records along straight rays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RayDegenerate

GRAZING_TOL = 1e-6


@dataclass(frozen=True)
class ExitRecord:
    """Exit data ``(tau-, q-, N-, tau+, q+, N+)`` for a phase point.

    Fields hold scalars/3-vectors for a single query, or arrays with a
    leading batch axis when produced by :func:`exit_records`.
    """

    tau_minus: np.ndarray
    q_minus: np.ndarray
    n_minus: np.ndarray
    tau_plus: np.ndarray
    q_plus: np.ndarray
    n_plus: np.ndarray


def exit_records(domain, x, v) -> ExitRecord:
    """Vectorised exit records for interior points ``x`` and velocities ``v``."""
    x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
    tau_m = domain.forward_exit(x, -v)
    tau_p = domain.forward_exit(x, v)
    q_m = x + tau_m[..., None] * (-v)
    q_p = x + tau_p[..., None] * v
    vhat = v / np.linalg.norm(v, axis=-1, keepdims=True)
    n_m = np.abs(np.einsum("...i,...i->...", domain.normal(q_m), vhat))
    n_p = np.abs(np.einsum("...i,...i->...", domain.normal(q_p), vhat))
    return ExitRecord(tau_m, q_m, np.minimum(n_m, 1.0), tau_p, q_p, np.minimum(n_p, 1.0))


def backward_exit(domain, x, v):
    """``(tau-, q-)`` only; the cheap half of an exit record."""
    x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
    tau = domain.forward_exit(x, -v)
    return tau, x + tau[..., None] * (-v)


def check_interior(domain, x):
    """Raise RayDegenerate unless ``x`` is interior by more than tol_surface."""
    x = np.asarray(x, dtype=float)
    f = domain.phi(x)
    g = np.linalg.norm(domain.grad(x), axis=-1)
    # -phi/|grad phi| is a first-order distance estimate; the gradient
    # vanishes only deep inside, where phi itself is clearly negative
    depth = np.where(g > 0, -f / np.where(g > 0, g, 1.0), np.inf)
    if np.any(f >= 0) or np.any(depth <= domain.tol_surface):
        raise RayDegenerate("query point is on or outside the boundary")


def exit_record(domain, x, v) -> ExitRecord:
    """Exit record of a single phase point.

    Raises RayDegenerate for points within tol_surface of the boundary
    and for grazing rays (``N- < 1e-6`` or ``N+ < 1e-6``).
    """
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    if not np.linalg.norm(v) > 0:
        raise ValueError("velocity must be nonzero")
    check_interior(domain, x)
    rec = exit_records(domain, x[None], v[None])
    if rec.n_minus[0] < GRAZING_TOL or rec.n_plus[0] < GRAZING_TOL:
        raise RayDegenerate("grazing ray")
    return ExitRecord(
        float(rec.tau_minus[0]), rec.q_minus[0], float(rec.n_minus[0]),
        float(rec.tau_plus[0]), rec.q_plus[0], float(rec.n_plus[0]),
    )


def sample_phase_points(domain, rng, n: int, speed: str = "unit"):
    """Interior points with random velocities, grazing rays resampled.

    ``speed='unit'`` draws unit velocities; ``'gaussian'`` draws standard
    normal velocities.  Returns ``(x, v, record)``.
    """
    xs, vs = [], []
    got = 0
    while got < n:
        m = n - got
        x = domain.sample_interior(rng, m)
        v = rng.standard_normal((m, 3))
        if speed == "unit":
            v /= np.linalg.norm(v, axis=1, keepdims=True)
        rec = exit_records(domain, x, v)
        ok = (rec.n_minus >= GRAZING_TOL) & (rec.n_plus >= GRAZING_TOL)
        xs.append(x[ok])
        vs.append(v[ok])
        got += int(ok.sum())
    x = np.concatenate(xs)[:n]
    v = np.concatenate(vs)[:n]
    return x, v, exit_records(domain, x, v)
