"""Collision frequency, Caflisch-envelope kernel, the velocity operator K and its moments."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import CoincidentVelocities, TruncationWarning
from .geometry.distance import _tangent_frame
from .geometry.integrals import gauss_legendre

COINCIDENT_TOL = 1e-14
CHUNK = 400_000  # velocity evaluations per batch in apply_K_batch


@dataclass(frozen=True)
class CollisionModel:
    """``nu(v) = nu0 (1+|v|)^gamma`` with the Caflisch kernel envelope.

    ``nu1`` is the upper envelope constant; with the canonical ``nu`` any
    ``nu1 >= nu0`` satisfies the two-sided bound, so it defaults to ``nu0``.
    """

    gamma: float = 1.0
    nu0: float = 1.0
    nu1: float | None = None
    kernel_scale: float = 1.0
    decay_rate: float = 0.125
    vmax: float = 8.0
    tail_tol: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.nu0 <= 0:
            raise ValueError("nu0 must be positive")
        if self.nu1 is None:
            object.__setattr__(self, "nu1", float(self.nu0))
        if self.nu1 < self.nu0:
            raise ValueError("nu1 must be >= nu0")
        if self.kernel_scale <= 0 or self.decay_rate <= 0 or self.vmax <= 0:
            raise ValueError("kernel_scale, decay_rate and vmax must be positive")

    @classmethod
    def from_spec(cls, spec: dict | None) -> "CollisionModel":
        spec = dict(spec or {})
        keys = {"gamma", "nu0", "nu1", "kernel_scale", "decay_rate", "vmax", "tail_tol"}
        unknown = set(spec) - keys
        if unknown:
            raise ValueError(f"unknown collision keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in spec.items()})

    def to_json(self) -> dict:
        return {"gamma": self.gamma, "nu0": self.nu0, "nu1": self.nu1, "kernel_scale": self.kernel_scale,
                "decay_rate": self.decay_rate, "vmax": self.vmax, "tail_tol": self.tail_tol}


def nu(model: CollisionModel, v):
    """Collision frequency; accepts a single velocity or an array ``(..., 3)``."""
    speed = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
    out = model.nu0 * (1.0 + speed) ** model.gamma
    return float(out) if np.ndim(out) == 0 else out


def _kernel(model, v, vstar):
    """Kernel on broadcast arrays; the caller guarantees ``v != vstar``."""
    rel = v - vstar
    r2 = np.einsum("...i,...i->...", rel, rel)
    # |v|^2 - |v*|^2 = (v - v*).(v + v*), which avoids cancellation for nearby speeds
    dq = np.einsum("...i,...i->...", rel, v + vstar)
    sp = np.linalg.norm(v, axis=-1) + np.linalg.norm(vstar, axis=-1)
    return (model.kernel_scale / np.sqrt(r2) * (1.0 + sp) ** (model.gamma - 1.0)
            * np.exp(-model.decay_rate * (r2 + dq * dq / r2)))


def kernel(model: CollisionModel, v, vstar):
    """``C_k |v-v*|^{-1} (1+|v|+|v*|)^{-(1-gamma)} exp(-(|v-v*|^2 + (|v|^2-|v*|^2)^2/|v-v*|^2)/8)``."""
    v, vstar = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(vstar, dtype=float))
    if np.any(np.linalg.norm(v - vstar, axis=-1) < COINCIDENT_TOL):
        raise CoincidentVelocities("kernel evaluated at v = v*")
    out = _kernel(model, v, vstar)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- quadrature

def radial_rule(n: int, R, power: float = 0.0):
    """Nodes/weights for ``int_0^R F(r) dr`` when ``F ~ r^power`` at 0.

    Non-integer powers use ``r = R t^{1/(power+1)}``, which makes the
    transformed integrand smooth.  ``R`` may be an array; results then
    carry a leading axis.
    """
    t, w = gauss_legendre(n)
    R = np.asarray(R, dtype=float)[..., None]
    if power == int(power) and power >= 0:
        return R * t, R * w
    q = 1.0 / (power + 1.0)
    return R * t**q, R * q * t ** (q - 1.0) * w


def _panels(n_panels: int, order: int, lo: float = -1.0, hi: float = 1.0):
    t, w = gauss_legendre(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    a, b = edges[:-1], edges[1:]
    return (a[:, None] + (b - a)[:, None] * t).ravel(), ((b - a)[:, None] * w).ravel()


def _frame(axis):
    """Orthonormal frames ``(n, 3, 3)`` whose third column is ``axis`` (z for zero axes)."""
    axis = np.atleast_2d(np.asarray(axis, dtype=float))
    nrm = np.linalg.norm(axis, axis=1)
    e3 = np.where(nrm[:, None] > 0, axis / np.where(nrm > 0, nrm, 1.0)[:, None], np.array([0.0, 0.0, 1.0]))
    e1, e2 = _tangent_frame(e3)
    return np.stack([e1, e2, e3], axis=2)


@dataclass(frozen=True)
class VelocityQuadrature:
    """Spherical product rule in velocity.

    ``scheme='polar'``: Gauss-Legendre in ``r`` and ``cos(theta)``,
    trapezoid in azimuth, centered at ``center``; :func:`apply_K`
    re-centers it on the query velocity so the ``|v-v*|^{-1}`` kernel
    singularity is absorbed by the ``r^2`` Jacobian.
    ``scheme='tensor-gauss'``: Gauss-Legendre in all three spherical
    coordinates about the origin; nodes are fixed, as needed for
    operator matrices.
    """

    scheme: str = "polar"
    vmax: float = 8.0
    n_r: int = 32
    n_mu: int = 32
    n_phi: int = 16
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.scheme not in ("polar", "tensor-gauss"):
            raise ValueError("scheme must be 'polar' or 'tensor-gauss'")
        if min(self.n_r, self.n_mu, self.n_phi) < 1 or self.vmax <= 0:
            raise ValueError("node counts and vmax must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @cached_property
    def local(self):
        """``(unit directions, radii, weights)`` in a frame with pole along z."""
        r, wr = radial_rule(self.n_r, self.vmax)
        mu, wmu = gauss_legendre(self.n_mu)
        mu, wmu = 2 * mu - 1, 2 * wmu
        if self.scheme == "polar":
            ph = 2 * np.pi * (np.arange(self.n_phi) + 0.5) / self.n_phi
            wph = np.full(self.n_phi, 2 * np.pi / self.n_phi)
        else:
            ph, wph = gauss_legendre(self.n_phi)
            ph, wph = 2 * np.pi * ph, 2 * np.pi * wph
        M, P = np.meshgrid(mu, ph, indexing="ij")
        S = np.sqrt(1 - M**2)
        dirs = np.stack([S * np.cos(P), S * np.sin(P), M], axis=-1).reshape(-1, 3)
        wa = np.outer(wmu, wph).ravel()
        dd = np.repeat(dirs, r.size, axis=0)
        rr = np.tile(r, wa.size)
        ww = np.repeat(wa, r.size) * np.tile(wr * r**2, wa.size)
        return dd, rr, ww

    @property
    def nodes(self) -> np.ndarray:
        d, r, _ = self.local
        return np.asarray(self.center) + r[:, None] * d

    @property
    def weights(self) -> np.ndarray:
        return self.local[2]

    def __len__(self):
        return self.weights.size

    def recentered(self, v) -> "VelocityQuadrature":
        return replace(self, center=tuple(np.asarray(v, dtype=float).reshape(3)))

    def refined(self, factor: int = 2) -> "VelocityQuadrature":
        return replace(self, n_r=self.n_r * factor, n_mu=self.n_mu * factor, n_phi=self.n_phi * factor)

    def integrate(self, fn) -> float:
        """Integrate ``fn(nodes)`` with this rule."""
        return float(np.sum(self.weights * fn(self.nodes)))

    def to_json(self) -> dict:
        return {"scheme": self.scheme, "vmax": self.vmax, "n_r": self.n_r, "n_mu": self.n_mu, "n_phi": self.n_phi}


def _polar_nodes(quad, v):
    """Polar nodes about each row of ``v`` with the pole along ``v``: ``(n, m, 3)`` and ``(m,)`` weights."""
    d, r, w = quad.local
    F = _frame(v)
    off = np.einsum("nij,mj->nmi", F, r[:, None] * d)
    return v[:, None, :] + off, w


def apply_K_batch(model: CollisionModel, quad: VelocityQuadrature, f, x, v):
    """Vectorised ``K f(x, v)`` for rows of ``x`` and ``v``.

    With the polar scheme each query is integrated over ``|v* - v| <= vmax``
    in coordinates centered at ``v``; ``tensor-gauss`` uses its fixed nodes
    and raises :class:`CoincidentVelocities` if one of them equals ``v``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x, v = np.broadcast_arrays(x, v)
    n = x.shape[0]
    m = len(quad)
    out = np.empty(n)
    step = max(1, CHUNK // m)
    for a in range(0, n, step):
        xs, vs = x[a:a + step], v[a:a + step]
        if quad.scheme == "polar":
            vstar, w = _polar_nodes(quad, vs)
        else:
            w = quad.weights
            vstar = np.broadcast_to(quad.nodes, (vs.shape[0], m, 3))
            if np.any(np.linalg.norm(vstar - vs[:, None, :], axis=-1) < COINCIDENT_TOL):
                raise CoincidentVelocities("a quadrature node coincides with the query velocity")
        k = _kernel(model, vs[:, None, :], vstar)
        fv = f(np.broadcast_to(xs[:, None, :], vstar.shape).reshape(-1, 3), vstar.reshape(-1, 3))
        out[a:a + step] = (np.asarray(fv).reshape(vstar.shape[:2]) * k) @ w
    return out


def _tail_shell(model, quad, f, x, v):
    """Integral of ``|k f|`` over ``vmax <= |v* - v| <= 2 vmax``."""
    shell = replace(quad, scheme="polar", vmax=quad.vmax, n_r=16)
    d, r, w = shell.local
    r = r + quad.vmax  # shift radii from [0, vmax] to [vmax, 2 vmax]
    w = w / (r - quad.vmax) ** 2 * r**2
    F = _frame(v[None])[0]
    vstar = v + (r[:, None] * d) @ F.T
    k = _kernel(model, v[None], vstar)
    return float(np.sum(w * np.abs(k * f(np.broadcast_to(x, vstar.shape), vstar))))


def apply_K(model: CollisionModel, quad: VelocityQuadrature, f, x, v, check_tail: bool = True) -> float:
    """``K f(x, v) = int k(v, v*) f(x, v*) dv*`` at one phase point."""
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    val = float(apply_K_batch(model, quad, f, x[None], v[None])[0])
    if check_tail:
        tail = _tail_shell(model, quad, f, x, v)
        if tail > model.tail_tol * max(abs(val), 1e-300) and tail > 1e-300:
            warnings.warn(f"tail beyond vmax is {tail:.3g} (|K f| = {abs(val):.3g})", TruncationWarning, stacklevel=2)
    return val


# ---------------------------------------------------------------- moments

def _axisym_integral(F, center, axis, R, power, n_r, mu_panels, n_phi=1, mu_range=(-1.0, 1.0), r_lo=0.0):
    """``int F(v*) dv*`` over ``|v* - center| <= R(mu)`` in polar coordinates with pole ``axis``.

    ``F`` receives points ``(..., 3)`` and the radius ``r``; ``R`` may be a
    function of ``mu = cos(angle to axis)``.  ``power`` is the behaviour of
    ``r^2 F`` at ``r = 0``.
    """
    mu, wmu = _panels(mu_panels[0], mu_panels[1], *mu_range)
    Rm = R(mu) if callable(R) else np.full(mu.shape, float(R))
    r, wr = radial_rule(n_r, Rm - r_lo, power)  # (n_mu, n_r)
    r = r + r_lo
    ph = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    F3 = _frame(np.asarray(axis, dtype=float)[None])[0]
    S = np.sqrt(np.maximum(1 - mu**2, 0.0))
    dirs = np.stack([S[:, None] * np.cos(ph), S[:, None] * np.sin(ph), np.broadcast_to(mu[:, None], (mu.size, n_phi))],
                    axis=-1) @ F3.T  # (n_mu, n_phi, 3)
    pts = np.asarray(center, dtype=float) + r[:, None, :, None] * dirs[:, :, None, :]
    vals = F(pts, np.broadcast_to(r[:, None, :], pts.shape[:-1]))
    W = wmu[:, None, None] * (2 * np.pi / n_phi) * (wr * r**2)[:, None, :]
    return float(np.sum(W * vals))


def _mu_panels(speed, rate, refine):
    return (refine * (int(np.ceil(2.0 * speed * np.sqrt(rate))) + 2), 16)


def _shell_tail(F, center, axis, R, speed, rate, refine):
    """Integral of ``F`` over ``R <= |v* - center| <= 2R`` (truncation estimate)."""
    return _axisym_integral(F, center, axis, 2 * R, 0, 24 * refine, _mu_panels(speed, rate, refine), refine,
                            r_lo=R)


def _finish(value, tail, tol, what):
    if abs(tail) > tol * max(abs(value), 1e-300):
        warnings.warn(f"{what}: truncated tail {tail:.3g} relative to {value:.3g}", TruncationWarning, stacklevel=3)
    return value


def moment_radius(model: CollisionModel) -> float:
    """Relative-speed cutoff for kernel moments: ``2 vmax`` (Gaussian tail below 1e-13 at defaults)."""
    return 2.0 * model.vmax


def kernel_moment(model: CollisionModel, v, power: int, refine: int = 1) -> float:
    """``int |k(v, v*)|^power dv*`` for ``power`` in {1, 2}.

    Polar about ``v`` with pole along ``v``; the integrand only depends on
    ``|v*|`` and ``|v - v*|``, so a single azimuth node is exact.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    v = np.asarray(v, dtype=float).reshape(3)
    sp = float(np.linalg.norm(v))
    R = moment_radius(model)

    def F(p, r):
        return _kernel(model, v, p) ** power

    val = _axisym_integral(F, v, v, R, 2 - power, 48 * refine, _mu_panels(sp, power * model.decay_rate, refine), refine)
    tail = _shell_tail(F, v, v, R, sp, power * model.decay_rate, 1)
    return _finish(val, tail, model.tail_tol, "kernel_moment")


def caflisch_integral(v, a1: float, a2: float, eps: float, refine: int = 1, tail_tol: float = 1e-5) -> float:
    """``int |v-v*|^{-(3-eps)} exp(-a1 |v-v*|^2 - a2 (|v|^2-|v*|^2)^2 / |v-v*|^2) dv*``."""
    if min(a1, a2, eps) <= 0:
        raise ValueError("a1, a2 and eps must be positive")
    v = np.asarray(v, dtype=float).reshape(3)
    sp = float(np.linalg.norm(v))
    R = np.sqrt(46.0 / a1)

    def F(p, r):
        rel = v - p
        dq = np.einsum("...i,...i->...", rel, v + p)
        return r ** (eps - 3.0) * np.exp(-a1 * r**2 - a2 * dq * dq / r**2)

    val = _axisym_integral(F, v, v, R, eps - 1.0, 48 * refine, _mu_panels(sp, a2, refine), refine)
    tail = _shell_tail(F, v, v, R, sp, a2, 1)
    return _finish(val, tail, tail_tol, "caflisch_integral")


def inverse_square_moment(model: CollisionModel, v, eps: float, refine: int = 1) -> float:
    """``int |v*|^{-(2-eps)} |k(v, v*)| dv*`` split at ``|v*| = |v - v*|``.

    Near the origin (``|v*| <= |v - v*|``) the rule is polar about 0, near
    ``v`` polar about ``v``; both pieces have smooth integrands after the
    radial substitution, and the dividing plane sets the radial limits.
    """
    if not 0 < eps < 2:
        raise ValueError("eps must lie in (0, 2)")
    v = np.asarray(v, dtype=float).reshape(3)
    sp = float(np.linalg.norm(v))
    R = moment_radius(model)
    mp = _mu_panels(sp, model.decay_rate, refine)
    nr = 48 * refine

    def F(p, r):
        ps = np.linalg.norm(p, axis=-1)
        return ps ** (eps - 2.0) * _kernel(model, v, p)

    if sp == 0.0:
        val = _axisym_integral(F, v, np.array([0, 0, 1.0]), R, eps - 1.0, nr, mp, refine)
    else:
        mu0 = min(sp / (2 * R), 1.0)

        def lim(sign):
            return lambda mu: np.minimum(R, sp / (2 * np.maximum(sign * mu, 1e-300)))

        val = 0.0
        # region |v*| <= |v - v*|: polar about 0, cut where r = |v| / (2 mu)
        for lo, hi, Rf in ((-1.0, 0.0, R), (0.0, mu0, R), (mu0, 1.0, lim(1))):
            if hi > lo:
                val += _axisym_integral(F, np.zeros(3), v, Rf, eps, nr, (mp[0], mp[1]), refine, (lo, hi))
        # region |v*| > |v - v*|: polar about v, cut where r = |v| / (2 |mu|)
        for lo, hi, Rf in ((-1.0, -mu0, lim(-1)), (-mu0, 0.0, R), (0.0, 1.0, R)):
            if hi > lo:
                val += _axisym_integral(F, v, v, Rf, 0, nr, (mp[0], mp[1]), refine, (lo, hi))
    tail = _shell_tail(F, v, v, R, sp, model.decay_rate, 1)
    return _finish(val, tail, model.tail_tol, "inverse_square_moment")


# ---------------------------------------------------------------- checks

def moment_sweep(model: CollisionModel, speeds=(0, 1, 2, 4, 8), refine: int = 1):
    """Rows ``(|v|, moment1, moment2, bound_ratio)``; ``bound_ratio`` is ``moment1 (1+|v|)^{2-gamma}``."""
    rows = []
    for s in speeds:
        v = np.array([float(s), 0.0, 0.0])
        m1 = kernel_moment(model, v, 1, refine)
        m2 = kernel_moment(model, v, 2, refine)
        rows.append((float(s), m1, m2, m1 * (1 + s) ** (2 - model.gamma)))
    return rows


def maxwellian_ratios(model: CollisionModel, a: float, speeds, quad: VelocityQuadrature | None = None):
    """``apply_K(e^{-a|v*|^2})(v) e^{a|v|^2}`` along ``v = |v| e1``."""
    if not 0 <= a < 0.25:
        raise ValueError("Gaussian rate must lie in [0, 1/4)")
    quad = quad or VelocityQuadrature(vmax=model.vmax)
    speeds = np.asarray(speeds, dtype=float)
    v = np.zeros((speeds.size, 3))
    v[:, 0] = speeds
    h = lambda x, w: np.exp(-a * np.einsum("ij,ij->i", w, w))
    vals = apply_K_batch(model, quad, h, np.zeros_like(v), v)
    return vals * np.exp(a * speeds**2)


@dataclass(frozen=True)
class SchurReport:
    spectral_norm: float
    schur_bound: float
    row_sum_max: float
    col_sum_max: float
    continuum_sup: float
    nodes: int

    @property
    def holds(self) -> bool:
        return self.spectral_norm <= self.schur_bound * (1 + 1e-12)


def schur_test(model: CollisionModel, quad: VelocityQuadrature | None = None) -> SchurReport:
    """Spectral norm of the discrete K on a tensor grid against the Schur bound.

    The symmetrised matrix ``W^{1/2} K W^{1/2}`` (diagonal removed) is the
    L^2-isometric image of the discrete operator; its norm must not exceed
    ``sqrt(max row sum * max column sum)`` of ``|K| W``.
    """
    quad = quad or VelocityQuadrature("tensor-gauss", vmax=model.vmax, n_r=12, n_mu=12, n_phi=12)
    V, w = quad.nodes, quad.weights
    m = V.shape[0]
    Kmat = np.zeros((m, m))
    iu = np.triu_indices(m, 1)
    Kmat[iu] = _kernel(model, V[iu[0]], V[iu[1]])
    Kmat = Kmat + Kmat.T
    sw = np.sqrt(w)
    B = sw[:, None] * Kmat * sw[None, :]
    norm = float(np.max(np.abs(np.linalg.eigvalsh(B))))
    rows = float(np.max(np.abs(Kmat) @ w))
    cols = float(np.max(w @ np.abs(Kmat)))
    cont = kernel_moment(model, np.zeros(3), 1)
    return SchurReport(norm, float(np.sqrt(rows * cols)), rows, cols, cont, m)
