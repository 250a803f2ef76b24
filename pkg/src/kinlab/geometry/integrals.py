"""Singular integrals over chords, the boundary surface and the domain."""
from __future__ import annotations

import numpy as np
from scipy.special import beta as beta_fn

from ..errors import QuadratureFailure
from .distance import _tangent_frame, distances, distances_from_boundary, foot_points

_GL = {}


def gauss_legendre(n: int):
    """Gauss-Legendre nodes/weights on [0, 1] (cached)."""
    if n not in _GL:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL[n]


def _chord_length(domain, y, vhat):
    """Forward chord length from ``y``; boundary starts use the line interval."""
    f = domain.phi(y)
    inside = f < -domain.tol_surface
    L = np.empty(y.shape[0])
    if inside.any():
        L[inside] = domain.forward_exit(y[inside], vhat[inside])
    if (~inside).any():
        t1, t2, hit = domain.line_interval(y[~inside], vhat[~inside])
        L[~inside] = np.where(hit, t2, 0.0)
    return L


def _end_rule(s, order, levels):
    """Nodes ``rho`` and weights on ``[0, 1]`` for ``int rho^{-s} g(rho)``-type integrands.

    Geometric panels ``[2^{-k-1}, 2^{-k}]`` plus an innermost panel mapped by
    ``rho = rho_K w^{1/(1-s)}``, which turns an endpoint ``rho^{-s}``
    singularity into a smooth integrand.
    """
    t, w = gauss_legendre(order)
    nodes, weights = [], []
    for k in range(levels):
        a, b = 2.0 ** (-k - 1), 2.0 ** (-k)
        nodes.append(a + (b - a) * t)
        weights.append((b - a) * w)
    rk = 2.0 ** (-levels)
    p = 1.0 / (1.0 - s)
    nodes.append(rk * t**p)
    weights.append(rk * p * t ** (p - 1.0) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def chord_frac_integrals(domain, y, vhat, s: float, order: int = 8, levels: int = 14):
    """Batch ``int_0^{|q+ - y|} d_{y + r vhat}^{-s} dr`` on a fixed graded rule.

    The chord is split at its midpoint and each half is integrated with
    the endpoint rule of :func:`_end_rule`, so both a boundary start and
    the exit point are resolved.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    vhat = np.atleast_2d(np.asarray(vhat, dtype=float))
    y, vhat = np.broadcast_arrays(y, vhat)
    vhat = vhat / np.linalg.norm(vhat, axis=1, keepdims=True)
    L = _chord_length(domain, y, vhat)
    if s == 0:
        return L
    rho, w = _end_rule(s, order, levels)
    half = 0.5 * L
    hr = half[:, None] * rho[None, :]
    on_start = domain.phi(y) >= -domain.tol_surface
    # first half measured from the start, second half back from the exit
    q_exit = y + L[:, None] * vhat
    d_exit = distances_from_boundary(domain, q_exit[:, None, :], -hr[..., None] * vhat[:, None, :])
    d_start = np.empty_like(hr)
    if on_start.any():
        d_start[on_start] = distances_from_boundary(
            domain, y[on_start, None, :], hr[on_start, :, None] * vhat[on_start, None, :])
    if (~on_start).any():
        pts = y[~on_start, None, :] + hr[~on_start, :, None] * vhat[~on_start, None, :]
        d_start[~on_start] = distances(domain, pts.reshape(-1, 3)).reshape(hr[~on_start].shape)
    d = np.maximum(np.concatenate([d_start, d_exit], axis=1), 1e-300)
    ww = half[:, None] * np.concatenate([w, w])[None, :]
    return np.sum(ww * d ** (-s), axis=1)


def chord_frac_integral(domain, y, vhat, s: float, tol: float = 1e-10, depth_cap: int = 12) -> float:
    """Adaptive ``int_0^{|q+ - y|} d^{-s}`` along one chord.

    Graded 16-node Gauss-Legendre panels are bisected until successive
    estimates agree to ``tol`` (relative); ``depth_cap`` bounds the number
    of halvings.
    """
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1)")
    y = np.asarray(y, dtype=float).reshape(1, 3)
    vhat = np.asarray(vhat, dtype=float).reshape(1, 3)
    prev = chord_frac_integrals(domain, y, vhat, s, order=16, levels=8)[0]
    for depth in range(1, depth_cap + 1):
        cur = chord_frac_integrals(domain, y, vhat, s, order=16, levels=8 + 4 * depth)[0]
        cur2 = chord_frac_integrals(domain, y, vhat, s, order=24, levels=8 + 4 * depth)[0]
        if abs(cur - prev) <= tol * abs(cur) and abs(cur2 - cur) <= tol * abs(cur):
            return float(cur2)
        prev = cur
    raise QuadratureFailure("chord integral did not converge within the depth cap")


def surface_singular_integral(domain, x, surface_samples: int = 20000, order: int = 16):
    """``int_{boundary} |x - q|^{-2} dSigma(q)`` as ``(value, stderr)``.

    Uses the cone change of variables ``dSigma = |x-q|^2 dw / |n.w|`` so
    the integral becomes ``int_{S^2} dw / N(x, w)``, evaluated in polar
    coordinates about the foot-point direction with panels graded toward
    the tangential band.  ``stderr`` is the difference to a refined rule.
    """
    x = np.asarray(x, dtype=float).reshape(3)
    n_az = int(np.clip(np.sqrt(surface_samples / order), 16, 1024))
    v1 = _sphere_quad(domain, x, order, n_az)
    v2 = _sphere_quad(domain, x, order + 8, 2 * n_az)
    return float(v2), float(abs(v2 - v1))


def _sphere_quad(domain, x, order, n_az):
    d, q, _ = foot_points(domain, x[None])
    d = float(d[0])
    e = q[0] - x
    en = np.linalg.norm(e)
    e = e / en if en > 0 else np.array([0.0, 0.0, 1.0])
    t1, t2 = _tangent_frame(e[None])
    t1, t2 = t1[0], t2[0]
    # breakpoints in u = cos(angle to e), graded geometrically toward u = 0
    w0 = max(0.05 * np.sqrt(max(d, 1e-300) / domain.bounding_radius), 1e-9)
    k = int(np.ceil(np.log2(1.0 / w0)))
    pos = np.concatenate([[0.0], w0 * 2.0 ** np.arange(k), [1.0]])
    pos = np.unique(np.clip(pos, 0, 1))
    brk = np.concatenate([-pos[::-1], pos[1:]])
    t, w = gauss_legendre(order)
    a, b = brk[:-1], brk[1:]
    u = (a[:, None] + (b - a)[:, None] * t).ravel()
    wu = ((b - a)[:, None] * w).ravel()
    ph = 2 * np.pi * (np.arange(n_az) + 0.5) / n_az
    U, P = np.meshgrid(u, ph, indexing="ij")
    S = np.sqrt(np.maximum(1 - U**2, 0.0))
    dirs = U[..., None] * e + (S * np.cos(P))[..., None] * t1 + (S * np.sin(P))[..., None] * t2
    dirs = dirs.reshape(-1, 3)
    tt = domain.forward_exit(np.broadcast_to(x, dirs.shape), dirs)
    hit = x + tt[:, None] * dirs
    N = np.abs(np.einsum("ij,ij->i", domain.normal(hit), dirs))
    W = (wu[:, None] * np.full(n_az, 2 * np.pi / n_az)).ravel()
    return float(np.sum(W / N))


def ball_surface_integral(rho: float, radius: float = 1.0) -> float:
    """Closed form of the surface integral for a ball, at distance ``rho`` from its center."""
    r = rho / radius
    if r == 0:
        return 4 * np.pi
    return float(2 * np.pi / r * np.log((1 + r) / (1 - r)))


def distance_integral(domain, eps: float, samples: int, rng, mix: float = 0.5):
    """Monte Carlo ``int_Omega d_x^{-(1-eps)} dx`` as ``(value, stderr)``.

    Points are drawn along rays from the interior point: depth fraction
    ``u = 1 - t/R(w)`` from a defensive mixture of Beta(eps, 3) (matching
    the boundary singularity) and Beta(1, 3) (uniform volume).
    """
    c = domain.interior_point
    w = rng.standard_normal((samples, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    R = domain.forward_exit(np.broadcast_to(c, w.shape), w)
    pick = rng.random(samples) < mix
    u = np.where(pick, rng.beta(eps, 3.0, samples), rng.beta(1.0, 3.0, samples))
    u = np.clip(u, 1e-300, 1.0)
    dens = mix * u ** (eps - 1) * (1 - u) ** 2 / beta_fn(eps, 3.0) + (1 - mix) * 3.0 * (1 - u) ** 2
    q = c + R[:, None] * w
    d = np.maximum(distances_from_boundary(domain, q, -(u * R)[:, None] * w), 1e-300)
    vals = 4 * np.pi * R**3 * (1 - u) ** 2 * d ** (eps - 1) / dens
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def ball_distance_integral(eps: float, radius: float = 1.0) -> float:
    """Closed form ``8 pi R^{2+eps} / (eps (1+eps) (2+eps))`` for a ball."""
    return 8 * np.pi * radius ** (2 + eps) / (eps * (1 + eps) * (2 + eps))
