"""Implicit convex domains and ray/boundary intersection."""
from __future__ import annotations

import json
from functools import cached_property

import numpy as np

from ..errors import ConfigError, NoConvergence

TOL_ROOT = 1e-12
MARCH_STEPS = 64
MAX_NEWTON = 100
GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


class ConvexDomain:
    """Smooth bounded convex body ``{phi < 0}``.

    Subclasses supply ``phi``, ``grad`` and ``hess`` (vectorised over a
    leading batch axis) and a certified ``bounding_radius`` about
    ``center``.  ``phi`` must be a convex function so that line
    restrictions are unimodal; every shipped kind satisfies this.
    """

    kind = "abstract"

    def __init__(self, params, center=(0.0, 0.0, 0.0), tol_root: float = TOL_ROOT):
        self.params = tuple(float(p) for p in params)
        self.center = np.asarray(center, dtype=float).reshape(3)
        self.tol_root = float(tol_root)

    # -- implicit oracles -------------------------------------------------
    def phi(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    @property
    def bounding_radius(self) -> float:
        raise NotImplementedError

    @property
    def interior_point(self):
        return self.center.copy()

    @property
    def tol_surface(self) -> float:
        return 1e-10 * self.bounding_radius

    @cached_property
    def diameter(self) -> float:
        # shipped kinds are centrally symmetric: diam = 2 max radial extent
        return 2.0 * self._max_radius()

    @cached_property
    def volume(self) -> float:
        # (1/3) int R(w)^3 dw over a product Gauss rule on the sphere
        dirs, w = sphere_rule(48, 96)
        t = self.forward_exit(np.broadcast_to(self.center, dirs.shape), dirs)
        return float(np.sum(w * t**3) / 3.0)

    def normal(self, q):
        g = self.grad(q)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def with_tolerance(self, tol_root: float) -> "ConvexDomain":
        return type(self)(self.params, self.center, tol_root)

    def scaled(self, factor: float) -> "ConvexDomain":
        """Copy of the domain dilated by ``factor`` about its center."""
        return type(self)(self._scaled_params(factor), self.center, self.tol_root)

    def _scaled_params(self, factor):
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "center": self.center.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}(params={self.params}, center={self.center.tolist()})"

    # -- rays -------------------------------------------------------------
    def _analytic_exit(self, x, d):
        return None

    def _analytic_interval(self, p, d):
        return None

    def forward_exit(self, x, d):
        """Exit parameter ``t > 0`` with ``x + t d`` on the boundary.

        ``x`` must be interior.  A closed form is used when the domain has
        one and the requested tolerance is at least as tight as its
        rounding error; otherwise the marching/Newton solver runs.
        """
        x, d = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(d, dtype=float))
        shape = x.shape[:-1]
        x, d = x.reshape(-1, 3), d.reshape(-1, 3)
        t = None
        if self.tol_root <= 1e-10:
            t = self._analytic_exit(x, d)
        if t is None:
            t = self._march_exit(x, d)
        return t.reshape(shape)

    def _march_exit(self, x, d):
        n = x.shape[0]
        dn = np.linalg.norm(d, axis=1)
        h = self.bounding_radius / MARCH_STEPS / dn
        lo = np.zeros(n)
        hi = np.full(n, np.nan)
        active = np.arange(n)
        for k in range(1, 2 * MARCH_STEPS + 3):
            if active.size == 0:
                break
            t = k * h[active]
            f = self.phi(x[active] + t[:, None] * d[active])
            done = f >= 0.0
            hi[active[done]] = t[done]
            lo[active[done]] = t[done] - h[active[done]]
            active = active[~done]
        if active.size:
            raise NoConvergence("ray march left the bounding ball without a sign change")
        return self._polish(x, d, lo, hi)

    def _polish(self, x, d, lo, hi):
        """Safeguarded Newton inside a sign-change bracket."""
        t = 0.5 * (lo + hi)
        out = np.empty_like(t)
        active = np.arange(t.size)
        for _ in range(MAX_NEWTON):
            xa, da = x[active], d[active]
            ta = t[active]
            p = xa + ta[:, None] * da
            f = self.phi(p)
            df = np.einsum("ij,ij->i", self.grad(p), da)
            neg = f < 0
            lo[active] = np.where(neg, ta, lo[active])
            hi[active] = np.where(neg, hi[active], ta)
            with np.errstate(divide="ignore", invalid="ignore"):
                tn = ta - f / df
            bad = ~np.isfinite(tn) | (tn <= lo[active]) | (tn >= hi[active]) | (df <= 0)
            tn = np.where(bad, 0.5 * (lo[active] + hi[active]), tn)
            tn = np.where(f == 0.0, ta, tn)
            step = np.abs(tn - ta)
            conv = (step <= self.tol_root * np.abs(tn)) | (f == 0.0)
            conv |= (hi[active] - lo[active]) <= self.tol_root * np.abs(tn)
            t[active] = tn
            out[active[conv]] = tn[conv]
            active = active[~conv]
            if active.size == 0:
                return out
        raise NoConvergence("boundary root polish exceeded iteration cap")

    def line_interval(self, p, d):
        """Parameters ``t1 <= t2`` where the line ``p + t d`` crosses the boundary.

        Returns ``(t1, t2, hit)``; entries with ``hit`` False are NaN.
        """
        p, d = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(d, dtype=float))
        shape = p.shape[:-1]
        p, d = p.reshape(-1, 3), d.reshape(-1, 3)
        res = None
        if self.tol_root <= 1e-10:
            res = self._analytic_interval(p, d)
        if res is None:
            res = self._generic_interval(p, d)
        return tuple(r.reshape(shape) for r in res)

    def _generic_interval(self, p, d):
        dd = np.einsum("ij,ij->i", d, d)
        tc = np.einsum("ij,ij->i", self.center - p, d) / dd
        half = self.bounding_radius / np.sqrt(dd)
        a, b = tc - half, tc + half
        # golden-section search for the minimum of the convex restriction
        for _ in range(80):
            c1 = b - GOLDEN * (b - a)
            c2 = a + GOLDEN * (b - a)
            left = self.phi(p + c1[:, None] * d) < self.phi(p + c2[:, None] * d)
            b = np.where(left, c2, b)
            a = np.where(left, a, c1)
        tm = 0.5 * (a + b)
        m = p + tm[:, None] * d
        hit = self.phi(m) < -self.tol_surface
        t1 = np.full(tm.shape, np.nan)
        t2 = np.full(tm.shape, np.nan)
        if hit.any():
            mh, dh = m[hit], d[hit]
            t2[hit] = tm[hit] + self._march_exit(mh, dh)
            t1[hit] = tm[hit] - self._march_exit(mh, -dh)
        return t1, t2, hit

    # -- sampling ---------------------------------------------------------
    def sample_interior(self, rng, n: int):
        """Uniform points in the domain by rejection from the bounding cube."""
        out = np.empty((0, 3))
        R = self.bounding_radius
        while out.shape[0] < n:
            m = max(2 * (n - out.shape[0]), 64)
            cand = self.center + rng.uniform(-R, R, size=(m, 3))
            keep = cand[self.phi(cand) < -self.tol_surface]
            out = np.vstack([out, keep])
        return out[:n]

    def boundary_from_directions(self, dirs):
        """Boundary points hit by rays from the center along ``dirs``."""
        dirs = np.asarray(dirs, dtype=float)
        c = np.broadcast_to(self.center, dirs.shape)
        t = self.forward_exit(c, dirs)
        return c + t[..., None] * dirs

    def _max_radius(self):
        from scipy.optimize import minimize

        dirs = fibonacci_sphere(4000)
        q = self.boundary_from_directions(dirs)
        r = np.linalg.norm(q - self.center, axis=1)
        w0 = dirs[np.argmax(r)]

        def neg_radius(ang):
            th, ph = ang
            u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
            return -float(self.forward_exit(self.center[None], u[None])[0])

        th0 = np.arccos(np.clip(w0[2], -1, 1))
        ph0 = np.arctan2(w0[1], w0[0])
        res = minimize(neg_radius, [th0, ph0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        return max(float(r.max()), -float(res.fun))


class Ball(ConvexDomain):
    """Ball of radius ``R``; ``phi = (|x-c|^2 - R^2) / (2R)`` is a near signed distance."""

    kind = "ball"

    def __init__(self, params=(1.0,), center=(0.0, 0.0, 0.0), tol_root: float = TOL_ROOT):
        if np.isscalar(params):
            params = (params,)
        super().__init__(params, center, tol_root)
        if len(self.params) != 1 or self.params[0] <= 0:
            raise ConfigError("ball needs one positive radius")
        self.radius = self.params[0]

    def phi(self, x):
        y = np.asarray(x) - self.center
        return (np.einsum("...i,...i->...", y, y) - self.radius**2) / (2 * self.radius)

    def grad(self, x):
        return (np.asarray(x) - self.center) / self.radius

    def hess(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(3) / self.radius, x.shape + (3,)).copy()

    @property
    def bounding_radius(self):
        return self.radius

    @cached_property
    def diameter(self):
        return 2.0 * self.radius

    @cached_property
    def volume(self):
        return 4.0 * np.pi * self.radius**3 / 3.0

    def _scaled_params(self, factor):
        return (self.radius * factor,)

    def _quadric(self, p, d):
        y = p - self.center
        a = np.einsum("ij,ij->i", d, d)
        b = 2.0 * np.einsum("ij,ij->i", d, y)
        c = (np.einsum("ij,ij->i", y, y) - self.radius**2)
        return a, b, c

    def _analytic_exit(self, x, d):
        return _quadric_exit(*self._quadric(x, d))

    def _analytic_interval(self, p, d):
        return _quadric_interval(*self._quadric(p, d))

    def exact_distance(self, x):
        y = np.asarray(x) - self.center
        r = np.linalg.norm(y, axis=-1)
        return self.radius - r


class Ellipsoid(ConvexDomain):
    """Axis-aligned ellipsoid with semi-axes ``(a1, a2, a3)``."""

    kind = "ellipsoid"

    def __init__(self, params=(2.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), tol_root: float = TOL_ROOT):
        super().__init__(params, center, tol_root)
        if len(self.params) != 3 or min(self.params) <= 0:
            raise ConfigError("ellipsoid needs three positive semi-axes")
        self.axes = np.array(self.params)
        self._A = 1.0 / self.axes**2
        self._scale = 0.5 * self.axes.min()

    def phi(self, x):
        y = np.asarray(x) - self.center
        return (np.sum(self._A * y * y, axis=-1) - 1.0) * self._scale

    def grad(self, x):
        y = np.asarray(x) - self.center
        return 2.0 * self._scale * self._A * y

    def hess(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.diag(2.0 * self._scale * self._A), x.shape + (3,)).copy()

    @property
    def bounding_radius(self):
        return float(self.axes.max())

    @cached_property
    def diameter(self):
        return 2.0 * float(self.axes.max())

    @cached_property
    def volume(self):
        return 4.0 * np.pi * float(np.prod(self.axes)) / 3.0

    def _scaled_params(self, factor):
        return tuple(self.axes * factor)

    def _quadric(self, p, d):
        y = p - self.center
        a = np.einsum("ij,ij->i", d * self._A, d)
        b = 2.0 * np.einsum("ij,ij->i", d * self._A, y)
        c = np.einsum("ij,ij->i", y * self._A, y) - 1.0
        return a, b, c

    def _analytic_exit(self, x, d):
        return _quadric_exit(*self._quadric(x, d))

    def _analytic_interval(self, p, d):
        return _quadric_interval(*self._quadric(p, d))


class Superellipsoid(ConvexDomain):
    """Smoothed superellipsoid ``sum ((x_i/a_i)^2 + delta^2)^(p/2) = L``.

    With ``1 <= p < 2`` and ``delta > 0`` every term is strictly convex,
    so the body is convex with positive curvature everywhere; ``L`` is
    chosen so the axis extents are exactly ``a_i``.
    """

    kind = "superellipsoid"

    def __init__(self, params=(1.0, 1.0, 1.0, 1.5, 0.3), center=(0.0, 0.0, 0.0), tol_root: float = TOL_ROOT):
        super().__init__(params, center, tol_root)
        if len(self.params) != 5:
            raise ConfigError("superellipsoid params are [a1, a2, a3, p, delta]")
        a1, a2, a3, p, delta = self.params
        if min(a1, a2, a3) <= 0 or not (1.0 <= p < 2.0) or delta <= 0:
            raise ConfigError("superellipsoid needs positive axes, 1 <= p < 2 and delta > 0")
        self.axes = np.array([a1, a2, a3])
        self.p = p
        self.delta = delta
        self.level = (1 + delta**2) ** (p / 2) + 2 * delta**p
        self._scale = self.axes.min() / p

    def phi(self, x):
        u = (np.asarray(x) - self.center) / self.axes
        return (np.sum((u * u + self.delta**2) ** (self.p / 2), axis=-1) - self.level) * self._scale

    def grad(self, x):
        u = (np.asarray(x) - self.center) / self.axes
        w = u * u + self.delta**2
        return self._scale * self.p * u * w ** (self.p / 2 - 1) / self.axes

    def hess(self, x):
        u = (np.asarray(x) - self.center) / self.axes
        w = u * u + self.delta**2
        p = self.p
        diag = self._scale * p * w ** (p / 2 - 2) * (w + (p - 2) * u * u) / self.axes**2
        out = np.zeros(u.shape + (3,))
        for i in range(3):
            out[..., i, i] = diag[..., i]
        return out

    @property
    def bounding_radius(self):
        # the body sits inside the box [-a, a]^3
        return float(np.linalg.norm(self.axes))

    def _scaled_params(self, factor):
        return tuple(self.axes * factor) + (self.p, self.delta)


def _quadric_exit(a, b, c):
    disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
    q = -0.5 * (b + np.where(b >= 0, disc, -disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a
        r2 = c / q
    return np.fmax(r1, r2)


def _quadric_interval(a, b, c):
    disc2 = b * b - 4 * a * c
    hit = disc2 > 0
    disc = np.sqrt(np.where(hit, disc2, 0.0))
    q = -0.5 * (b + np.where(b >= 0, disc, -disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a
        r2 = np.where(q != 0, c / q, -r1)
    t1 = np.where(hit, np.fmin(r1, r2), np.nan)
    t2 = np.where(hit, np.fmax(r1, r2), np.nan)
    return t1, t2, hit


KINDS = {"ball": Ball, "ellipsoid": Ellipsoid, "superellipsoid": Superellipsoid}


def domain_from_spec(spec) -> ConvexDomain:
    """Build a domain from ``{"kind", "params", "center"}`` (dict or JSON text)."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"domain config is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("domain config needs a 'kind'")
    kind = spec["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown domain kind {kind!r}")
    params = spec.get("params")
    if params is None:
        raise ConfigError("domain config needs 'params'")
    center = spec.get("center", [0.0, 0.0, 0.0])
    try:
        center = np.asarray(center, dtype=float).reshape(3)
        return KINDS[kind](params, center)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain parameters: {exc}") from exc


def fibonacci_sphere(n: int):
    """Deterministic, nearly uniform unit vectors."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    th = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


def sphere_rule(n_polar: int, n_azimuth: int):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), trapezoid in azimuth."""
    mu, wmu = np.polynomial.legendre.leggauss(n_polar)
    ph = 2 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    M, P = np.meshgrid(mu, ph, indexing="ij")
    s = np.sqrt(1 - M**2)
    dirs = np.stack([s * np.cos(P), s * np.sin(P), M], axis=-1).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_azimuth, 2 * np.pi / n_azimuth)[None, :]).reshape(-1)
    return dirs, w


def random_directions(rng, n: int):
    u = rng.standard_normal((n, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)
