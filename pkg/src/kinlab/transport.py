"""Transport operators J, S_Omega, whole-space S, and the Picard iterates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .collision import CollisionModel, VelocityQuadrature, _kernel, _polar_nodes, apply_K_batch, kernel_moment, nu
from .errors import BudgetExceeded, MembershipViolation, QuadratureFailure
from .geometry.distance import _tangent_frame
from .geometry.integrals import gauss_legendre
from .geometry.rays import check_interior, exit_record
from .phase import PhaseFunction

BOUNDARY_KINDS = ("constant", "gaussian", "lipschitz_bump")
DEFAULT_BUDGET = 2e8
PICARD_MAX = 3


# ---------------------------------------------------------------- boundary data

@dataclass(frozen=True)
class BoundaryData:
    """Incoming data ``g(q, v)`` with Gaussian rate ``a`` and amplitude ``C``.

    ``constant``: ``g = C`` (only ``a = 0`` is admissible);
    ``gaussian``: ``g = C e^{-a|v|^2}``;
    ``lipschitz_bump``: ``g = C e^{-a|v|^2} (3/4 + cos(k.q)/4)``.
    """

    kind: str = "gaussian"
    a: float = 0.1
    C: float = 1.0
    k: tuple = (2.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"boundary kind must be one of {BOUNDARY_KINDS}")
        if not 0 <= self.a < 0.25:
            raise ValueError("Gaussian rate must lie in [0, 1/4)")
        if self.kind == "constant" and self.a != 0:
            raise ValueError("constant boundary data has rate a = 0")
        object.__setattr__(self, "k", tuple(float(c) for c in self.k))

    @classmethod
    def from_spec(cls, spec: dict | None) -> "BoundaryData":
        spec = dict(spec or {})
        kind = spec.pop("kind", "gaussian")
        a = float(spec.pop("a", 0.0 if kind == "constant" else 0.1))
        C = float(spec.pop("C", 1.0))
        k = tuple(spec.pop("k", (2.0, 0.0, 0.0)))
        if spec:
            raise ValueError(f"unknown boundary keys {sorted(spec)}")
        return cls(kind, a, C, k)

    def to_json(self) -> dict:
        return {"kind": self.kind, "a": self.a, "C": self.C, "k": list(self.k)}

    @property
    def gaussian_rate(self) -> float:
        return self.a

    @property
    def lipschitz_constant(self) -> float:
        """``C_g`` bounding both the Gaussian envelope and the Lipschitz modulus in ``q``."""
        if self.kind == "lipschitz_bump":
            return abs(self.C) * max(1.0, 0.25 * float(np.linalg.norm(self.k)))
        return abs(self.C)

    @property
    def is_zero(self) -> bool:
        return self.C == 0

    def __call__(self, q, v):
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        q, v = np.broadcast_arrays(q, v)
        if self.kind == "constant":
            return np.full(q.shape[:-1], self.C)
        out = self.C * np.exp(-self.a * np.einsum("...i,...i->...", v, v))
        if self.kind == "lipschitz_bump":
            out = out * (0.75 + 0.25 * np.cos(q @ np.asarray(self.k)))
        return out

    def envelope_check(self, domain, rng, n: int = 1000):
        """Violations of the Gaussian envelope and of the Lipschitz bound over random samples."""
        d1 = rng.standard_normal((n, 3))
        d2 = rng.standard_normal((n, 3))
        q1 = domain.boundary_from_directions(d1 / np.linalg.norm(d1, axis=1, keepdims=True))
        q2 = domain.boundary_from_directions(d2 / np.linalg.norm(d2, axis=1, keepdims=True))
        v = 3.0 * rng.standard_normal((n, 3))
        Cg = self.lipschitz_constant
        env = np.abs(self(q1, v)) > Cg * np.exp(-self.a * np.sum(v * v, axis=1)) * (1 + 1e-12)
        lip = np.abs(self(q1, v) - self(q2, v)) > Cg * np.linalg.norm(q1 - q2, axis=1) * (1 + 1e-12) + 1e-15
        return int(env.sum()), int(lip.sum())


# ---------------------------------------------------------------- batch operators

def _backward_tau(domain, x, v):
    """``tau-`` for rows of ``x, v``; zero velocities give ``inf``."""
    moving = np.einsum("ij,ij->i", v, v) > 0
    tau = np.full(x.shape[0], np.inf)
    if moving.any():
        tau[moving] = domain.forward_exit(x[moving], -v[moving])
    return tau


def J_function(domain, model: CollisionModel, data: BoundaryData) -> PhaseFunction:
    """``J g(x, v) = e^{-nu(v) tau-(x,v)} g(q-(x,v), v)`` as a lazily evaluated field."""

    def ev(x, v):
        tau = _backward_tau(domain, x, v)
        out = np.zeros(x.shape[0])
        fin = np.isfinite(tau)
        if data.is_zero or not fin.any():
            return out
        q = x[fin] - tau[fin, None] * v[fin]
        out[fin] = np.exp(-nu(model, v[fin]) * tau[fin]) * data(q, v[fin])
        return out

    return PhaseFunction(ev, "omega", "operator_composition", domain, label="J g")


def S_function(domain, model: CollisionModel, h: PhaseFunction, chord_nodes: int = 8) -> PhaseFunction:
    """``S_Omega h`` on a fixed Gauss rule in the damped variable ``w = 1 - e^{-nu s}``.

    For separable ``h = a(x) c(v)`` only ``a`` is evaluated along the chord.
    """
    t, wt = gauss_legendre(chord_nodes)
    sep = h.separable

    def ev(x, v):
        n = x.shape[0]
        tau = _backward_tau(domain, x, v)
        rate = nu(model, v)
        W = -np.expm1(-rate * tau)
        s = -np.log1p(-W[:, None] * t[None, :]) / rate[:, None]
        y = (x[:, None, :] - s[..., None] * v[:, None, :]).reshape(-1, 3)
        if sep is not None:
            hv = sep[0](y).reshape(n, chord_nodes) * sep[1](v)[:, None]
        else:
            hv = h.evaluator(y, np.repeat(v, chord_nodes, axis=0)).reshape(n, chord_nodes)
        return W / rate * (hv @ wt)

    return PhaseFunction(ev, "omega", "operator_composition", domain, label=f"S({h.label})")


RADIAL_TABLE = 257


def K_function(model: CollisionModel, quad: VelocityQuadrature, h: PhaseFunction) -> PhaseFunction:
    """``K h`` evaluated with :func:`apply_K_batch`.

    When ``h = a(x) c(|v|)`` the result is ``a(x) (K c)(|v|)`` with ``K c``
    tabulated once on a radial grid (cubic spline), since ``K`` commutes
    with rotations.
    """
    if h.separable is not None and h.radial_v:
        a, c = h.separable
        speeds = np.linspace(0.0, 2.0 * quad.vmax, RADIAL_TABLE)
        pts = np.zeros((speeds.size, 3))
        pts[:, 0] = speeds
        vals = apply_K_batch(model, quad, lambda x, v: c(v), pts, pts)
        spline = CubicSpline(speeds, vals)
        top = speeds[-1]

        def kc(v):
            sp = np.linalg.norm(v, axis=1)
            return np.where(sp <= top, spline(np.minimum(sp, top)), 0.0)

        return PhaseFunction(lambda x, v: a(x) * kc(v), h.support, "operator_composition", h.domain, (a, kc),
                             label=f"K({h.label})", radial_v=True)
    return PhaseFunction(lambda x, v: apply_K_batch(model, quad, h.evaluator, x, v), h.support,
                         "operator_composition", h.domain, label=f"K({h.label})")


def SK_function(domain, model, quad, h, chord_nodes: int = 8) -> PhaseFunction:
    return S_function(domain, model, K_function(model, quad, h), chord_nodes)


def picard_cost(i: int, quad: VelocityQuadrature, chord_nodes: int, points: int = 1) -> float:
    """Leaf evaluations of ``J`` needed for ``g_i`` at ``points`` phase points."""
    return float(points) * float(chord_nodes * len(quad)) ** i


def picard_function(domain, model, quad, data, i: int, chord_nodes: int = 8) -> PhaseFunction:
    """``g_i = (S_Omega K)^i J g`` as a nested evaluator tree (no order cap)."""
    f = J_function(domain, model, data)
    for _ in range(i):
        f = SK_function(domain, model, quad, f, chord_nodes)
    return PhaseFunction(f.evaluator, "omega", "operator_composition", domain, label=f"g{i}")


# ---------------------------------------------------------------- pointwise operators

def apply_J(domain, model: CollisionModel, data: BoundaryData, x, v) -> float:
    """``e^{-nu(v) tau-(x,v)} g(q-(x,v), v)`` at an interior point."""
    rec = exit_record(domain, x, v)
    v = np.asarray(v, dtype=float).reshape(3)
    return float(np.exp(-nu(model, v) * rec.tau_minus) * data(rec.q_minus, v))


def _damped_adaptive(F, W, tol, depth_cap, order=16):
    """``int_0^W F(w) dw`` by panel bisection with Gauss-Legendre ``order`` nodes."""
    t, wt = gauss_legendre(order)

    def rule(a, b):
        return (b - a) * float(np.dot(wt, F(a + (b - a) * t)))

    total = 0.0
    stack = [(0.0, W, rule(0.0, W), 0)]
    scale = None
    while stack:
        a, b, whole, depth = stack.pop()
        m = 0.5 * (a + b)
        left, right = rule(a, m), rule(m, b)
        if scale is None:
            scale = max(abs(left + right), 1e-300)
        if abs(left + right - whole) <= tol * scale * (b - a) / W or abs(left + right - whole) < 1e-300:
            total += left + right
        elif depth >= depth_cap:
            raise QuadratureFailure("chord quadrature exceeded the depth cap")
        else:
            stack.append((a, m, left, depth + 1))
            stack.append((m, b, right, depth + 1))
    return total


def _damped_integral(h, x, v, rate, t0, t1, tol, depth_cap):
    """``int_{t0}^{t1} e^{-nu t} h(x - t v, v) dt`` with ``w = 1 - e^{-nu (t - t0)}``."""
    W = -np.expm1(-rate * (t1 - t0)) if np.isfinite(t1) else 1.0
    if W <= 0:
        return 0.0

    def F(w):
        s = t0 - np.log1p(-w) / rate
        return h(x[None, :] - s[:, None] * v[None, :], np.broadcast_to(v, (w.size, 3)))

    return float(np.exp(-rate * t0) / rate * _damped_adaptive(F, W, tol, depth_cap))


def apply_S_omega(domain, model: CollisionModel, h: PhaseFunction, x, v, tol: float = 1e-10,
                  depth_cap: int = 12) -> float:
    """``int_0^{tau-(x,v)} e^{-nu(v) s} h(x - s v, v) ds`` by adaptive quadrature."""
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    rec = exit_record(domain, x, v)
    return _damped_integral(h, x, v, nu(model, v), 0.0, rec.tau_minus, tol, depth_cap)


def apply_S_wholespace(model: CollisionModel, h: PhaseFunction, x, v, tol: float = 1e-10,
                       depth_cap: int = 12) -> float:
    """``int_0^inf e^{-nu(v) t} h(x - t v, v) dt``.

    When ``h`` records a support domain the integral is restricted to the
    part of the backward ray inside it, where the integrand can be nonzero.
    """
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    rate = nu(model, v)
    if not np.linalg.norm(v) > 0:
        return float(h(x, v)) / rate
    t0, t1 = 0.0, np.inf
    if h.domain is not None and h.support == "whole_space":
        a, b, hit = h.domain.line_interval(x[None], -v[None])
        if not hit[0] or b[0] <= 0:
            return 0.0
        t0, t1 = max(float(a[0]), 0.0), float(b[0])
    return _damped_integral(h, x, v, rate, t0, t1, tol, depth_cap)


def zero_extension(f: PhaseFunction, domain=None) -> PhaseFunction:
    """``Z f``: ``f`` inside the domain and 0 elsewhere."""
    return f.zero_extended(domain)


def picard_term(domain, model, quad, data, i: int, x, v, chord_nodes: int = 8,
                budget: float = DEFAULT_BUDGET) -> float:
    """``g_i(x, v)`` for ``i <= 3`` by nested evaluation.

    Raises :class:`BudgetExceeded` when ``(chord_nodes * |quad|)^i`` leaf
    evaluations exceed ``budget``.
    """
    if not 0 <= i <= PICARD_MAX:
        raise ValueError(f"picard_term supports orders 0..{PICARD_MAX}")
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    if i == 0:
        return apply_J(domain, model, data, x, v)
    check_interior(domain, x)
    return float(picard_batch(domain, model, quad, data, i, x[None], v[None], chord_nodes, budget)[0])


def picard_batch(domain, model, quad, data, i, x, v, chord_nodes: int = 8, budget: float = DEFAULT_BUDGET):
    """``g_i`` at a batch of phase points, any order, guarded by the node budget."""
    cost = picard_cost(i, quad, chord_nodes, x.shape[0])
    if cost > budget:
        raise BudgetExceeded(f"g_{i} needs {cost:.3g} leaf evaluations (budget {budget:.3g})")
    if data.is_zero:
        return np.zeros(x.shape[0])
    return picard_function(domain, model, quad, data, i, chord_nodes).evaluator(x, v)


@dataclass(frozen=True)
class SeriesResult:
    """Partial sum of Picard terms; unpacks as ``(value, residual)``."""

    value: float
    residual: float
    terms: tuple = field(default=())
    non_decay: bool = False

    def __iter__(self):
        return iter((self.value, self.residual))


def truncated_series_solve(domain, model, quad, data, x, v, depth: int, chord_nodes: int = 8,
                           budget: float = DEFAULT_BUDGET) -> SeriesResult:
    """``sum_{i <= depth} g_i(x, v)`` with ``|g_{depth+1}|`` as the remainder proxy.

    ``non_decay`` is set when some term exceeds its predecessor in
    magnitude.  No convergence claim is attached to the sum.
    """
    if not 0 <= depth <= 4:
        raise ValueError("depth must lie in 0..4")
    x = np.asarray(x, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    check_interior(domain, x)
    terms = [float(picard_batch(domain, model, quad, data, i, x[None], v[None], chord_nodes, budget)[0])
             for i in range(depth + 2)]
    mags = np.abs(terms)
    non_decay = bool(np.any(mags[1:] > mags[:-1] * (1 + 1e-12) + 1e-300))
    return SeriesResult(float(np.sum(terms[:-1])), float(mags[-1]), tuple(terms[:-1]), non_decay)


# ---------------------------------------------------------------- checks

@dataclass(frozen=True)
class SKSquareReport:
    constant: float
    max_ratio_sk: float
    max_ratio_ks: float
    violations: int
    samples: int


def sk_square_bound_check(domain, model, quad, h: PhaseFunction, samples: int, rng, chord_nodes: int = 32,
                          speed_scale: float = 2.0) -> SKSquareReport:
    """Both sides of the two squared-operator inequalities at random ``(y, v)``.

    The constant is the Cauchy-Schwarz one, ``sup_v int |k| dv* / (2 nu0)``;
    reported ratios are ``LHS / RHS`` and a violation is ``LHS > C RHS``.
    """
    C = kernel_moment(model, np.zeros(3), 1) / (2 * model.nu0)
    y = domain.sample_interior(rng, samples)
    v = speed_scale * rng.standard_normal((samples, 3))
    t, wt = gauss_legendre(chord_nodes)
    r1, r2 = np.zeros(samples), np.zeros(samples)
    viol = 0
    for i in range(samples):
        yi, vi = y[i], v[i]
        sp = np.linalg.norm(vi)
        tau = domain.forward_exit(yi[None], -vi[None])[0]
        # S_Omega K h (y, v) and its right-hand side
        s = tau * t
        pts = yi - s[:, None] * vi
        Kh = apply_K_batch(model, quad, h.evaluator, pts, np.broadcast_to(vi, pts.shape))
        lhs1 = (tau * np.dot(wt, np.exp(-nu(model, vi) * s) * Kh)) ** 2
        vstar, w = _polar_nodes(quad, vi[None])
        vstar = vstar[0]
        kk = np.abs(_kernel(model, vi, vstar))
        L = tau * sp
        rr = L * t
        hp = h(yi - rr[:, None, None] * (vi / sp), vstar[None, :, :]) ** 2  # (n_r, m)
        rhs1 = np.dot(wt, hp @ (w * kk)) * L / sp
        # K S_Omega h (y, v) and its right-hand side
        taus = domain.forward_exit(np.broadcast_to(yi, vstar.shape), -vstar)
        rate = nu(model, vstar)
        ss = taus[:, None] * t[None, :]
        pts2 = yi - ss[..., None] * vstar[:, None, :]
        vv = np.broadcast_to(vstar[:, None, :], pts2.shape)
        hh = h(pts2, vv)
        Sh = taus * ((np.exp(-rate[:, None] * ss) * hh) @ wt)
        lhs2 = np.dot(w, _kernel(model, vi, vstar) * Sh) ** 2
        rhs2 = np.dot(w, kk * taus * ((hh**2) @ wt))
        for lhs, rhs, store in ((lhs1, rhs1, r1), (lhs2, rhs2, r2)):
            store[i] = lhs / rhs if rhs > 0 else 0.0
            if lhs > C * rhs * (1 + 1e-6) + 1e-300:
                viol += 1
    return SKSquareReport(C, float(r1.max()), float(r2.max()), viol, samples)


@dataclass(frozen=True)
class ChangeOfVariableReport:
    variant: str
    roundtrip_error: float
    membership_violations: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    samples: int
    offending: tuple | None = None

    @property
    def z_score(self) -> float:
        se = np.hypot(self.lhs_stderr, self.rhs_stderr)
        return abs(self.lhs - self.rhs) / se if se > 0 else 0.0


def _mean_se(vals):
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(vals.size))


def _gauss_velocities(rng, n, sigma):
    v = sigma * rng.standard_normal((n, 3))
    dens = np.exp(-np.sum(v * v, axis=1) / (2 * sigma**2)) / (2 * np.pi * sigma**2) ** 1.5
    return v, dens


def _len_minus(domain, x, vhat):
    return domain.forward_exit(x, -vhat)


def _len_plus(domain, x, vhat):
    return domain.forward_exit(x, vhat)


def change_of_variable_check(domain, variant: str, samples: int, rng, raise_on_violation: bool = False,
                             sigma: float = 0.8) -> ChangeOfVariableReport:
    """Bijection, membership and two-sided integral checks for the shift maps.

    ``cov1``: ``(v, y, r) -> (v, y - r vhat, r)`` between
    ``A = {r < |y - q-(y,v)|}`` and ``B = {r' < |y' - q+(y',v')|}``.
    ``cov2``: ``(v, y, x, r) -> (v, y - r vhat, x - r vhat, r)`` between the
    ordered-exit set and the set where ``x'`` lies outside the domain on a
    ray that enters it before ``|y' - q+(y', v')|``.
    """
    if variant == "cov1":
        return _cov1(domain, samples, rng, raise_on_violation, sigma)
    if variant == "cov2":
        return _cov2(domain, samples, rng, raise_on_violation, sigma)
    raise ValueError("variant must be 'cov1' or 'cov2'")


def _h1(v, y, r):
    return np.exp(-np.sum(v * v, axis=-1)) * (1.0 + r + np.sum(y * y, axis=-1))


def _cov1(domain, n, rng, strict, sigma):
    vol = domain.volume
    tol = 1e-9 * domain.bounding_radius
    # A side: (v, y, r) with r < |y - q-(y, v)|
    v, pv = _gauss_velocities(rng, n, sigma)
    vh = v / np.linalg.norm(v, axis=1, keepdims=True)
    y = domain.sample_interior(rng, n)
    La = _len_minus(domain, y, vh)
    r = La * rng.random(n)
    lhs = _mean_se(_h1(v, y, r) * La * vol / pv)
    # X maps into B
    y2 = y - r[:, None] * vh
    inB = (domain.phi(y2) < 0) & (r <= _len_plus(domain, y2, vh) + tol)
    back = y2 + r[:, None] * vh
    err = float(np.max(np.abs(back - y)))
    # B side sampled independently, integrand pulled back through Y
    v2, pv2 = _gauss_velocities(rng, n, sigma)
    vh2 = v2 / np.linalg.norm(v2, axis=1, keepdims=True)
    yb = domain.sample_interior(rng, n)
    Lb = _len_plus(domain, yb, vh2)
    rb = Lb * rng.random(n)
    ya = yb + rb[:, None] * vh2
    inA = (domain.phi(ya) < 0) & (rb <= _len_minus(domain, ya, vh2) + tol)
    err = max(err, float(np.max(np.abs((ya - rb[:, None] * vh2) - yb))))
    rhs = _mean_se(_h1(v2, ya, rb) * Lb * vol / pv2)
    bad = np.flatnonzero(~inB)
    bad_b = np.flatnonzero(~inA)
    offending = None
    if bad.size:
        offending = (v[bad[0]].tolist(), y[bad[0]].tolist(), float(r[bad[0]]))
    elif bad_b.size:
        offending = (v2[bad_b[0]].tolist(), yb[bad_b[0]].tolist(), float(rb[bad_b[0]]))
    nviol = int(bad.size + bad_b.size)
    if strict and nviol:
        raise MembershipViolation("mapped tuple left the target domain", offending)
    return ChangeOfVariableReport("cov1", err, nviol, *lhs, *rhs, n, offending)


def _h2(v, y, x, r):
    return np.exp(-np.sum(v * v, axis=-1)) * (1.0 + r) * np.exp(-0.5 * np.sum((x - y) ** 2, axis=-1))


def _cov2(domain, n, rng, strict, sigma):
    vol = domain.volume
    tol = 1e-9 * domain.bounding_radius
    c = np.asarray(domain.interior_point, dtype=float)
    # A side: (x, y, v) in D1 with |x - q-(x,v)| < r < |y - q-(y,v)|
    v, pv = _gauss_velocities(rng, n, sigma)
    vh = v / np.linalg.norm(v, axis=1, keepdims=True)
    x = domain.sample_interior(rng, n)
    y = domain.sample_interior(rng, n)
    Lx, Ly = _len_minus(domain, x, vh), _len_minus(domain, y, vh)
    inD1 = Lx <= Ly
    r = Lx + (Ly - Lx) * rng.random(n)
    lhs = _mean_se(np.where(inD1, _h2(v, y, x, r) * (Ly - Lx), 0.0) * vol**2 / pv)
    idx = np.flatnonzero(inD1)
    xs, ys, rs, vhs = x[idx], y[idx], r[idx], vh[idx]
    x2, y2 = xs - rs[:, None] * vhs, ys - rs[:, None] * vhs
    ok = _in_B2(domain, vhs, y2, x2, rs, tol)
    err = float(np.max(np.abs(np.concatenate([x2 + rs[:, None] * vhs - xs, y2 + rs[:, None] * vhs - ys]))))
    # B side: x' in cylinder coordinates along vhat (unit Jacobian); the
    # admissible set on each line is an explicit interval before the entry point
    Rb = domain.bounding_radius
    vb, pvb = _gauss_velocities(rng, n, sigma)
    vhb = vb / np.linalg.norm(vb, axis=1, keepdims=True)
    yb = domain.sample_interior(rng, n)
    Lp = _len_plus(domain, yb, vhb)
    e1, e2 = _tangent_frame(vhb)
    rad = Rb * np.sqrt(rng.random(n))
    ang = 2 * np.pi * rng.random(n)
    base = c + (rad * np.cos(ang))[:, None] * e1 + (rad * np.sin(ang))[:, None] * e2
    a_in, b_out, hit = domain.line_interval(base, vhb)
    lam = a_in - Lp * rng.random(n)
    xb = base + lam[:, None] * vhb
    t1, t2 = a_in - lam, b_out - lam
    member = hit & (t1 > 0) & (t1 < Lp)
    hi = np.minimum(t2, Lp)
    width = np.where(member, hi - t1, 0.0)
    rb = t1 + width * rng.random(n)
    ball = np.pi * Rb**2 * Lp
    xa, ya = xb + rb[:, None] * vhb, yb + rb[:, None] * vhb
    rhs = _mean_se(np.where(member, _h2(vb, ya, xa, rb) * width, 0.0) * vol * ball / pvb)
    jb = np.flatnonzero(member)
    okb = _in_A2(domain, vhb[jb], ya[jb], xa[jb], rb[jb], tol)
    err = max(err, float(np.max(np.abs(xa[jb] - rb[jb, None] * vhb[jb] - xb[jb]), initial=0.0)))
    offending = None
    if (~ok).any():
        i = idx[np.flatnonzero(~ok)[0]]
        offending = (v[i].tolist(), y[i].tolist(), x[i].tolist(), float(r[i]))
    elif (~okb).any():
        i = jb[np.flatnonzero(~okb)[0]]
        offending = (vb[i].tolist(), yb[i].tolist(), xb[i].tolist(), float(rb[i]))
    nviol = int((~ok).sum() + (~okb).sum())
    if strict and nviol:
        raise MembershipViolation("mapped tuple left the target domain", offending)
    return ChangeOfVariableReport("cov2", err, nviol, *lhs, *rhs, n, offending)


def _in_B2(domain, vh, y2, x2, r, tol):
    """Membership of ``(v', y', x', r')`` in the image set, including the entry-ray conditions on ``x'``."""
    Lp = _len_plus(domain, y2, vh)
    t1, t2, hit = domain.line_interval(x2, vh)
    return ((domain.phi(y2) < 0) & (domain.phi(x2) >= -tol) & hit & (t1 > -tol) & (t1 < Lp + tol)
            & (t1 <= r + tol) & (r <= np.minimum(t2, Lp) + tol))


def _in_A2(domain, vh, y, x, r, tol):
    Lx, Ly = _len_minus(domain, x, vh), _len_minus(domain, y, vh)
    return (domain.phi(x) < 0) & (domain.phi(y) < 0) & (Lx <= Ly + tol) & (Lx <= r + tol) & (r <= Ly + tol)


@dataclass(frozen=True)
class ConeJacobianReport:
    exact: float
    value: float
    stderr: float
    samples: int

    @property
    def z_score(self) -> float:
        return abs(self.value - self.exact) / self.stderr if self.stderr > 0 else 0.0


def cone_jacobian(domain, samples: int, rng, x=None) -> ConeJacobianReport:
    """``int e^{-|v|^2} dv`` against its boundary-cone form ``int int h((x-z) l) l^2 |(x-z).n(z)| dl dSigma(z)``.

    Boundary points are parametrised by directions from the domain's
    interior point (surface element ``|z-c|^2 / |n.w|``) and ``l`` is drawn
    from a half-normal law, so the estimate is independent of the cone
    geometry about ``x``.
    """
    c = np.asarray(domain.interior_point, dtype=float)
    if x is None:
        x = c + 0.3 * domain.bounding_radius * np.array([0.6, -0.3, 0.2])
        if domain.phi(x) >= 0:
            x = c
    x = np.asarray(x, dtype=float)
    w = rng.standard_normal((samples, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    z = domain.boundary_from_directions(w)
    n = domain.normal(z)
    dz = z - c
    dS = np.sum(dz * dz, axis=1) / np.abs(np.sum(n * w, axis=1))
    xz = x - z
    L = np.linalg.norm(xz, axis=1)
    sig = 1.0 / L
    l = np.abs(rng.standard_normal(samples)) * sig
    pl = np.sqrt(2 / np.pi) / sig * np.exp(-0.5 * (l / sig) ** 2)
    h = np.exp(-(L * l) ** 2)
    vals = 4 * np.pi * dS * h * l**2 * np.abs(np.sum(xz * n, axis=1)) / pl
    m, se = _mean_se(vals)
    return ConeJacobianReport(float(np.pi**1.5), m, se, samples)
