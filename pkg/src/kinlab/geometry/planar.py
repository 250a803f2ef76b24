"""Planar disk constructions: distance comparison and the curvature-exit property."""
from __future__ import annotations

import numpy as np

from .distance import _tangent_frame


def distance_comparison_samples(rng, n: int):
    """Random disk configurations ``(A, B, Y)`` and the two sides of the comparison.

    A circle of random center/radius carries ``A``, ``B`` bounding a minor
    arc with midpoint ``N``; ``M`` is the chord midpoint, ``Y`` lies on
    ``AM`` and ``Z`` on ``AN`` with ``Z - Y`` orthogonal to ``A - B``.
    Returns ``(dist(Y, circle), |Z - Y| / sqrt(2))``.
    """
    r = rng.uniform(0.1, 10.0, n)
    O = rng.uniform(-5, 5, (n, 2))
    rot = rng.uniform(0, 2 * np.pi, n)
    alpha = rng.uniform(0, np.pi / 2, n)
    lam = rng.uniform(0, 1, n)

    def place(pt):
        c, s = np.cos(rot), np.sin(rot)
        return O + r[:, None] * np.stack([c * pt[:, 0] - s * pt[:, 1], s * pt[:, 0] + c * pt[:, 1]], axis=1)

    A = place(np.stack([np.cos(alpha), np.sin(alpha)], axis=1))
    B = place(np.stack([np.cos(alpha), -np.sin(alpha)], axis=1))
    N = place(np.stack([np.ones(n), np.zeros(n)], axis=1))
    M = 0.5 * (A + B)
    Y = A + lam[:, None] * (M - A)
    # Z on AN at the same height as Y along A - B
    AB = A - B
    mu = np.einsum("ij,ij->i", Y - A, AB) / np.einsum("ij,ij->i", N - A, AB)
    Z = A + mu[:, None] * (N - A)
    lhs = r - np.linalg.norm(Y - O, axis=1)
    rhs = np.linalg.norm(Z - Y, axis=1) / np.sqrt(2)
    return lhs, rhs


def section_curve(domain, q, tangent, n_theta: int = 4001):
    """Closed planar section through boundary point ``q`` in the plane of ``n(q)`` and ``tangent``.

    Returns ``(theta, points, curvature, e1, e2)``; ``theta = 0`` is ``q``.
    """
    n = domain.normal(q[None])[0]
    e1, e2 = n, tangent - np.dot(tangent, n) * n
    e2 /= np.linalg.norm(e2)
    t_in = domain.forward_exit(q[None] - 1e-9 * domain.bounding_radius * n[None], -n[None])[0]
    c = q - 0.5 * t_in * n
    th = np.linspace(0, 2 * np.pi, n_theta)
    dirs = np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2
    T = domain.forward_exit(np.broadcast_to(c, dirs.shape), dirs)
    pts = c + T[:, None] * dirs
    g = domain.grad(pts)
    H = domain.hess(pts)
    E = np.stack([e1, e2], axis=1)
    g2 = g @ E
    H2 = np.einsum("ia,nij,jb->nab", E, H, E)
    gp = np.stack([-g2[:, 1], g2[:, 0]], axis=1)
    kappa = np.einsum("na,nab,nb->n", gp, H2, gp) / np.linalg.norm(g2, axis=1) ** 3
    return th, pts, kappa, e1, e2


def curvature_exit_check(domain, rng, configs: int, tol: float = 1e-9):
    """Instantiate the disk-exit curvature property on planar sections.

    For a boundary point ``A = q`` and radius ``r`` the disk of radius
    ``r`` is tangent to the section at ``A`` from inside.  When the
    section enters the disk and leaves it again at ``B`` along a minor
    arc (staying inside the circular segment), some curvature on the arc
    ``AB`` must be at most ``1/r``.  Returns ``(violations, valid, worst)``
    where ``worst`` is the largest ``min k - 1/r`` seen.  Radii are drawn
    log-uniformly between the extreme curvature radii of each section,
    the only range where the construction is non-vacuous.
    """
    violations, valid, worst = 0, 0, -np.inf
    dirs = rng.standard_normal((configs, 3))
    qs = domain.boundary_from_directions(dirs / np.linalg.norm(dirs, axis=1, keepdims=True))
    for i in range(configs):
        q = qs[i]
        n = domain.normal(q[None])[0]
        t1, t2 = _tangent_frame(n[None])
        ang = rng.uniform(0, 2 * np.pi)
        tangent = np.cos(ang) * t1[0] + np.sin(ang) * t2[0]
        th, pts, kappa, e1, e2 = section_curve(domain, q, tangent)
        kmin, kmax = kappa.min(), kappa.max()
        if kmax <= kmin * (1 + 1e-9):
            continue
        r = np.exp(rng.uniform(np.log(1 / kmax), np.log(1 / kmin)))
        O = q - r * e1
        D = np.linalg.norm(pts - O, axis=1) - r
        half = th <= np.pi
        inside = np.flatnonzero(half & (D < -tol * r))
        if inside.size == 0:
            continue
        after = np.flatnonzero(half & (np.arange(th.size) > inside[0]) & (D >= 0))
        if after.size == 0:
            continue
        jB = after[0]
        B = pts[jB]
        # minor arc and circular-segment hypotheses
        ca = np.dot(q - O, B - O) / r**2
        cross = np.dot(np.cross(q - O, B - O), np.cross(e1, e2))
        if ca <= -1 + 1e-12 or cross < 0 and ca < 0:
            continue
        chord_n = np.cross(np.cross(e1, e2), B - q)
        side_O = np.sign(np.dot(O - q, chord_n))
        seg = pts[1:jB]
        if seg.size and np.any(np.sign((seg - q) @ chord_n) == side_O):
            continue
        valid += 1
        m = float(kappa[: jB + 1].min()) - 1.0 / r
        worst = max(worst, m)
        if m > tol * max(1.0, 1.0 / r):
            violations += 1
    return violations, valid, worst
