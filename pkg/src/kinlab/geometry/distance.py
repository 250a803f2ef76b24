"""Distance to the boundary by constrained Newton foot-point projection."""
from __future__ import annotations

import itertools

import numpy as np

from ..errors import NoConvergence, RayDegenerate

NEWTON_ITERS = 40
# stencil of the 26 neighbours of a cube cell, used for multistart
STENCIL = np.array([p for p in itertools.product((-1, 0, 1), repeat=3) if any(p)], dtype=float)
STENCIL /= np.linalg.norm(STENCIL, axis=1, keepdims=True)


class Distance(float):
    """A distance value carrying its foot point and a multistart flag."""

    foot: np.ndarray
    multistart: bool

    def __new__(cls, value, foot, multistart):
        obj = super().__new__(cls, value)
        obj.foot = foot
        obj.multistart = bool(multistart)
        return obj


def _tangent_frame(n):
    a = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = np.cross(n, a)
    # a zero normal (vanishing gradient) yields a zero frame, rejected by callers
    nt = np.linalg.norm(t1, axis=1, keepdims=True)
    t1 /= np.where(nt > 0, nt, 1.0)
    t2 = np.cross(n, t1)
    return t1, t2


def _newton(domain, x, q, tol):
    """Solve ``q - x = lam grad phi(q)``, ``phi(q) = 0`` from the start ``q``.

    Returns ``(q, lam, ok)`` where ``ok`` marks converged local minima of
    the distance with ``lam >= 0``.
    """
    q = q.copy()
    g = domain.grad(q)
    gg = np.einsum("ij,ij->i", g, g)
    lam = np.einsum("ij,ij->i", q - x, g) / np.where(gg > 0, gg, 1.0)
    eye = np.eye(3)
    active = np.arange(x.shape[0])
    for _ in range(NEWTON_ITERS):
        qa, la, xa = q[active], lam[active], x[active]
        g = domain.grad(qa)
        J = np.zeros((active.size, 4, 4))
        J[:, :3, :3] = eye - la[:, None, None] * domain.hess(qa)
        J[:, :3, 3] = -g
        J[:, 3, :3] = g
        F = np.concatenate([qa - xa - la[:, None] * g, domain.phi(qa)[:, None]], axis=1)
        det = np.linalg.det(J)
        good = np.isfinite(det) & (np.abs(det) > 1e-300)
        delta = np.zeros_like(F)
        if good.any():
            delta[good] = np.linalg.solve(J[good], -F[good][..., None])[..., 0]
        q[active] = qa + delta[:, :3]
        lam[active] = la + delta[:, 3]
        done = (np.linalg.norm(delta[:, :3], axis=1) <= tol) | ~good
        active = active[~done]
        if active.size == 0:
            break
    g = domain.grad(q)
    gn = np.linalg.norm(g, axis=1)
    res = np.linalg.norm(q - x - lam[:, None] * g, axis=1) + np.abs(domain.phi(q))
    ok = (res <= 1e3 * tol) & (lam >= -tol) & (gn > 0)
    # local minimum test: I - lam*H restricted to the tangent plane is positive
    nrm = g / np.where(gn > 0, gn, 1.0)[:, None]
    t1, t2 = _tangent_frame(nrm)
    T = np.stack([t1, t2], axis=2)
    M = np.eye(2) - lam[:, None, None] * np.einsum("nia,nij,njb->nab", T, domain.hess(q), T)
    ok &= np.linalg.eigvalsh(M)[:, 0] > 0
    return q, lam, ok


def foot_points(domain, x):
    """Batch foot points: returns ``(distance, foot, multistart_used)``."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    x = x.reshape(-1, 3)
    n = x.shape[0]
    if hasattr(domain, "exact_distance") and domain.tol_root <= 1e-10:
        y = x - domain.center
        r = np.linalg.norm(y, axis=1)
        u = np.where(r[:, None] > 0, y / np.where(r > 0, r, 1.0)[:, None], np.array([1.0, 0, 0]))
        d = domain.exact_distance(x)
        return d.reshape(shape), (domain.center + domain.radius * u).reshape(shape + (3,)), np.zeros(shape, bool)

    tol = max(domain.tol_root, 1e-15) * domain.bounding_radius
    # start: project along the gradient until the level set is reached
    q = x.copy()
    g0 = np.linalg.norm(domain.grad(x), axis=1)
    for _ in range(30):
        g = domain.grad(q)
        gg = np.einsum("ij,ij->i", g, g)
        step = np.where(gg > 0, domain.phi(q) / np.where(gg > 0, gg, 1.0), 0.0)
        q = q - step[:, None] * g
    q, lam, ok = _newton(domain, x, q, tol)
    ok &= g0 > 1e-8 * domain.bounding_radius
    d = np.linalg.norm(q - x, axis=1)

    # deep points may have several critical points; confirm with multistart
    if ok.any():
        gq = domain.grad(q[ok])
        nrm = gq / np.linalg.norm(gq, axis=1, keepdims=True)
        t1, t2 = _tangent_frame(nrm)
        T = np.stack([t1, t2], axis=2)
        W = np.einsum("nia,nij,njb->nab", T, domain.hess(q[ok]), T) / np.linalg.norm(gq, axis=1)[:, None, None]
        kmax = np.linalg.eigvalsh(W)[:, -1]
        deep = d[ok] * kmax > 0.5
        idx = np.flatnonzero(ok)
        ok[idx[deep]] = False
    multi = ~ok
    if multi.any():
        dm, qm = _multistart(domain, x[multi], tol)
        d[multi] = dm
        q[multi] = qm
    return d.reshape(shape), q.reshape(shape + (3,)), multi.reshape(shape)


def _multistart(domain, x, tol, keep: int = 4):
    """Newton from the ``keep`` nearest of 26 stencil ray hits; best local minimum wins."""
    m = x.shape[0]
    xs = np.repeat(x, len(STENCIL), axis=0)
    dirs = np.tile(STENCIL, (m, 1))
    t = domain.forward_exit(xs, dirs).reshape(m, -1)
    order = np.argsort(t, axis=1)[:, :keep]
    rows = np.arange(m)[:, None]
    ray = t[rows, order]
    hits = x[:, None, :] + ray[..., None] * STENCIL[order]
    xk = np.repeat(x, keep, axis=0)
    q, lam, ok = _newton(domain, xk, hits.reshape(-1, 3), tol)
    dist = np.where(ok, np.linalg.norm(q - xk, axis=1), np.inf).reshape(m, keep)
    best = np.argmin(dist, axis=1)
    r = np.arange(m)
    d = dist[r, best]
    qq = q.reshape(m, keep, 3)[r, best]
    fail = ~np.isfinite(d)
    if fail.any():
        # nothing converged: fall back to the nearest ray hit
        d[fail] = ray[fail, 0]
        qq[fail] = hits[fail, 0]
    if not np.all(np.isfinite(d)):
        raise NoConvergence("foot-point projection failed")
    return d, qq


def distances(domain, x):
    """Vectorised ``d_x`` for interior points."""
    return foot_points(domain, x)[0]


def distance_to_boundary(domain, x) -> Distance:
    """``d_x = dist(x, boundary)`` for an interior point, with foot point metadata."""
    x = np.asarray(x, dtype=float).reshape(3)
    if domain.phi(x) >= 0:
        raise RayDegenerate("distance_to_boundary needs an interior point")
    d, q, multi = foot_points(domain, x[None])
    return Distance(float(d[0]), q[0], bool(multi[0]))


NEAR_BOUNDARY = 1e-6


def depth_near(domain, q, y):
    """Distance of ``q + y`` to the boundary for a boundary point ``q`` and small offset ``y``.

    Recomputing ``d`` from the absolute position loses all relative
    precision once ``|y|`` approaches rounding level.  Instead the local
    quadratic model ``psi(z) = g.z + z.H.z/2`` of ``phi`` at ``q`` is
    solved along its gradient line, which is exact for quadric domains
    and accurate to ``O(|y|)`` relative otherwise.
    """
    g = domain.grad(q)
    H = domain.hess(q)
    Hy = np.einsum("...ij,...j->...i", H, y)
    psi = np.einsum("...i,...i->...", g, y) + 0.5 * np.einsum("...i,...i->...", y, Hy)
    gp = g + Hy
    gn = np.linalg.norm(gp, axis=-1)
    e = gp / gn[..., None]
    a = 0.5 * np.einsum("...i,...ij,...j->...", e, H, e)
    # solve psi + gn t + a t^2 = 0 for the root nearest zero (psi < 0 inside)
    disc = np.sqrt(np.maximum(gn * gn - 4 * a * psi, 0.0))
    return np.maximum(-2 * psi / (gn + disc), 0.0)


def distances_from_boundary(domain, q, y):
    """``d`` at ``q + y`` using :func:`depth_near` for tiny offsets and foot points otherwise."""
    q, y = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(y, dtype=float))
    shape = q.shape[:-1]
    q, y = q.reshape(-1, 3), y.reshape(-1, 3)
    small = np.linalg.norm(y, axis=1) < NEAR_BOUNDARY * domain.bounding_radius
    d = np.empty(q.shape[0])
    if small.any():
        d[small] = depth_near(domain, q[small], y[small])
    if (~small).any():
        d[~small] = distances(domain, q[~small] + y[~small])
    return d.reshape(shape)
