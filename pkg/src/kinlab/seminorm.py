"""Slobodeckij seminorms by stratified Monte Carlo, FFT fractional norms, multiplier decay."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import AliasWarning, QuadratureFailure, ShellFloorDominant
from .geometry.distance import distances_from_boundary
from .geometry.domains import fibonacci_sphere
from .parallel import ordered_sum, run_chunks

SHELL_FLOOR = 2.0**-16
FLOOR_SHARE = 0.1
FIT_SHELLS = 12
LN2 = math.log(2.0)


@dataclass(frozen=True)
class SeminormEstimate:
    """Monte Carlo estimate of the squared seminorm ``int int int |f(x,v)-f(y,v)|^2 / |x-y|^{3+2s}``.

    ``value`` is the squared quantity and equals ``sum(shell_profile) +
    exterior`` (``exterior`` is nonzero only for zero-extended estimates);
    :attr:`seminorm` is its square root.  ``remainder`` is the extrapolated
    contribution from below the shell floor, reported but not included.
    """

    s: float
    value: float
    stderr: float
    samples: int
    seed: int
    shell_profile: tuple = field(default=())
    shell_stderr: tuple = field(default=())
    exterior: float = 0.0
    exterior_stderr: float = 0.0
    remainder: float = 0.0
    flagged: bool = False

    @property
    def seminorm(self) -> float:
        return math.sqrt(max(self.value, 0.0))

    def to_json(self) -> dict:
        return {"s": self.s, "value": self.value, "stderr": self.stderr, "samples": self.samples, "seed": self.seed,
                "shell_profile": list(self.shell_profile), "exterior": self.exterior, "remainder": self.remainder,
                "flagged": self.flagged}


def _velocity_samples(rng, n, scale):
    v = scale * rng.standard_normal((n, 3))
    logp = -np.sum(v * v, axis=1) / (2 * scale**2) - 1.5 * math.log(2 * math.pi * scale**2)
    return v, np.exp(-logp)


def _geometric_tail(profile, nonzero, min_hits: int = 10, stderr=None):
    """Sub-floor remainder from the geometric trend of the shell profile (``inf`` if not decaying).

    The trend is fitted on the deepest ``FIT_SHELLS`` shells beyond the
    profile peak that still hold at least ``min_hits`` nonzero samples, so rare-event shells (e.g. pairs
    straddling a jump) do not masquerade as decay; the fitted curve is then
    summed below the floor.  With ``stderr`` the log-linear fit is weighted
    by the inverse relative error of each shell.
    """
    p = np.asarray(profile, dtype=float)
    nz = np.asarray(nonzero)
    if np.all(p == 0):
        return 0.0
    good = np.flatnonzero((nz >= min_hits) & (p > 0))
    if good.size < 3:
        return math.inf
    # the geometric regime starts past the profile peak
    past = good[good > int(np.argmax(p))]
    sel = past[-FIT_SHELLS:] if past.size >= 3 else good[-3:]
    w = None
    if stderr is not None:
        rel = np.asarray(stderr, dtype=float)[sel] / p[sel]
        w = 1.0 / np.maximum(rel, 1e-3)
    slope, icpt = np.polyfit(sel, np.log(p[sel]), 1, w=w)
    q = math.exp(slope)
    if q >= 1:
        return math.inf
    last = p.size - 1
    return float(math.exp(icpt + slope * last) * q / (1 - q))


def _shell_count(floor):
    return max(int(round(-math.log2(floor))), 1)


def slobodeckij_multi(domain, f, s_list, budget: int, seed: int, shell_floor: float = SHELL_FLOOR,
                      zero_extend: bool = False, velocity_scale: float = 2.0, workers: int = 1,
                      exterior_share: float = 0.25, warn: bool = True):
    """Estimates for every ``s`` in ``s_list`` from one set of samples (common random numbers).

    Interior pairs: ``x`` uniform in the domain, ``|x - y|`` log-uniform in
    dyadic shells ``[2^{-j-1}, 2^{-j}] diam`` (sample ``i`` goes to shell
    ``i mod J``), uniform direction, Gaussian importance sampling in ``v``.
    With ``zero_extend`` the pairs with one point outside the domain are
    added exactly in the radial variable: ``2 int |f(y)|^2 W_s(y) dy`` with
    ``W_s(y) = (1/2s) int_{S^2} tau(y, w)^{-2s} dw``, sampled with a
    boundary-graded depth law.

    ``velocity_scale`` is the standard deviation of the velocity proposal; the
    default suits profiles like ``e^{-a|v|^2}`` with small ``a``.  For faster
    velocity decay a matched scale gives a much steadier error estimate.
    """
    s_arr = np.asarray(list(s_list), dtype=float)
    if np.any((s_arr <= 0) | (s_arr >= 1)):
        raise ValueError("orders must lie in (0, 1)")
    J = _shell_count(shell_floor)
    D = domain.diameter
    vol = domain.volume
    n_int = int(budget * (1 - exterior_share)) if zero_extend else int(budget)
    n_int = max(n_int, J)

    def interior_chunk(rng, start, count):
        shell = (start + np.arange(count)) % J
        x = domain.sample_interior(rng, count)
        w = rng.standard_normal((count, 3))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        rho = D * 2.0 ** (-shell - 1 + rng.random(count))
        y = x + rho[:, None] * w
        v, inv_p = _velocity_samples(rng, count, velocity_scale)
        inside = domain.phi(y) < 0
        diff2 = np.zeros(count)
        if inside.any():
            fx = f(x[inside], v[inside])
            fy = f(y[inside], v[inside])
            diff2[inside] = (fx - fy) ** 2
        base = vol * 4 * math.pi * LN2 * diff2 * inv_p
        vals = base[None, :] * rho[None, :] ** (-2 * s_arr[:, None])  # (n_s, count)
        sums = np.zeros((s_arr.size, J))
        sq = np.zeros((s_arr.size, J))
        cnt = np.bincount(shell, minlength=J)
        nz = np.bincount(shell, diff2 > 0, minlength=J)
        for k in range(s_arr.size):
            sums[k] = np.bincount(shell, vals[k], minlength=J)
            sq[k] = np.bincount(shell, vals[k] ** 2, minlength=J)
        return sums, sq, cnt, nz

    parts = run_chunks(interior_chunk, seed, n_int, workers=workers, stream=1)
    cnt = np.sum([p[2] for p in parts], axis=0)
    nonzero = np.sum([p[3] for p in parts], axis=0)
    S = np.array([[[ordered_sum(p[0][k, j] for p in parts)] for j in range(J)] for k in range(s_arr.size)])[..., 0]
    Q = np.array([[[ordered_sum(p[1][k, j] for p in parts)] for j in range(J)] for k in range(s_arr.size)])[..., 0]
    mean = S / cnt
    var = np.maximum(Q / cnt - mean**2, 0.0) * cnt / np.maximum(cnt - 1, 1)
    sh_err = np.sqrt(var / cnt)

    ext = np.zeros(s_arr.size)
    ext_err = np.zeros(s_arr.size)
    if zero_extend:
        ext, ext_err = _exterior_term(domain, f, s_arr, max(int(budget * exterior_share), 64), seed,
                                      velocity_scale, workers)

    out = []
    for k, s in enumerate(s_arr):
        profile = tuple(float(m) for m in mean[k])
        value = ordered_sum(profile) + float(ext[k])
        rem = _geometric_tail(profile, nonzero, stderr=sh_err[k])
        flagged = bool(value > 0 and rem > FLOOR_SHARE * value) or (value == 0 and rem > 0)
        if flagged and warn:
            warnings.warn(f"sub-floor remainder {rem:.3g} exceeds {FLOOR_SHARE:.0%} of the estimate {value:.3g} "
                          f"at s = {s}", ShellFloorDominant, stacklevel=2)
        err = math.sqrt(float(np.sum(sh_err[k] ** 2)) + float(ext_err[k]) ** 2)
        out.append(SeminormEstimate(float(s), value, err, int(n_int + (budget * exterior_share if zero_extend else 0)),
                                    int(seed), profile, tuple(float(e) for e in sh_err[k]), float(ext[k]),
                                    float(ext_err[k]), rem, flagged))
    return out


def _exterior_term(domain, f, s_arr, n, seed, velocity_scale, workers, n_dirs: int = 16):
    """``2 int_Omega int |f(y,v)|^2 W_s(y) dv dy`` by depth-graded sampling."""
    c = np.asarray(domain.interior_point, dtype=float)
    Rb = domain.bounding_radius
    eps = max(1.0 - 2.0 * float(s_arr.max()), 0.05)
    base_dirs = fibonacci_sphere(n_dirs)

    def chunk(rng, start, count):
        w = rng.standard_normal((count, 3))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        R = domain.forward_exit(np.broadcast_to(c, w.shape), w)
        pick = rng.random(count) < 0.5
        u = np.where(pick, rng.beta(eps, 3.0, count), rng.beta(1.0, 3.0, count))
        u = np.clip(u, 1e-300, 1.0)
        dens = 0.5 * u ** (eps - 1) * (1 - u) ** 2 / special.beta(eps, 3.0) + 0.5 * 3.0 * (1 - u) ** 2
        jac = 4 * math.pi * R**3 * (1 - u) ** 2 / dens
        q = c + R[:, None] * w
        off = -(u * R)[:, None] * w
        y = q + off
        d = np.maximum(distances_from_boundary(domain, q, off), 1e-300)
        v, inv_p = _velocity_samples(rng, count, velocity_scale)
        fy2 = f(y, v) ** 2
        # random rotation of a fixed direction set per point: unbiased angular average
        Qm = np.linalg.qr(rng.standard_normal((count, 3, 3)))[0]
        dirs = np.einsum("nij,mj->nmi", Qm, base_dirs)
        tau = domain.forward_exit(np.broadcast_to(y[:, None, :], dirs.shape).reshape(-1, 3),
                                  dirs.reshape(-1, 3)).reshape(count, n_dirs)
        tau = np.maximum(tau, 1e-300)
        near = d < 1e-6 * Rb
        vals = np.empty((s_arr.size, count))
        for k, s in enumerate(s_arr):
            W = 4 * math.pi * np.mean(tau ** (-2 * s), axis=1) / (2 * s)
            # half-space limit where ray exits lose relative precision
            W = np.where(near, 2 * math.pi * d ** (-2 * s) / ((1 + 2 * s) * 2 * s), W)
            vals[k] = 2 * fy2 * W * jac * inv_p
        return vals.sum(axis=1), (vals**2).sum(axis=1), count

    parts = run_chunks(chunk, seed, n, workers=workers, stream=2)
    S = np.array([ordered_sum(p[0][k] for p in parts) for k in range(s_arr.size)])
    Q = np.array([ordered_sum(p[1][k] for p in parts) for k in range(s_arr.size)])
    m = S / n
    var = np.maximum(Q / n - m**2, 0.0) * n / max(n - 1, 1)
    return m, np.sqrt(var / n)


def slobodeckij_seminorm(domain, f, s: float, budget: int, seed: int, **kw) -> SeminormEstimate:
    """Single-order estimate; see :func:`slobodeckij_multi` for the estimator."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    return slobodeckij_multi(domain, f, [s], budget, seed, **kw)[0]


# ---------------------------------------------------------------- Fourier side

def velocity_rule(n_radial: int = 2, n_angular: int = 16, beta: float = 2.0):
    """Product rule for ``int F(v) dv`` exact for ``e^{-beta|v|^2}`` times low-degree radial polynomials.

    Radial nodes are generalized Gauss-Laguerre in ``t = beta r^2``; the
    angular part uses equal-weight Fibonacci directions.  Returns
    ``(nodes, weights, damping)`` where the weights already include
    ``e^{+beta |v|^2}``.
    """
    t, wt = special.roots_genlaguerre(n_radial, 0.5)
    r = np.sqrt(t / beta)
    # int r^2 e^{-beta r^2} g dr = (1/2) beta^{-3/2} int t^{1/2} e^{-t} g dt
    wr = 0.5 * beta**-1.5 * wt * np.exp(t)
    dirs = fibonacci_sphere(n_angular)
    nodes = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    weights = np.repeat(wr, n_angular) * (4 * math.pi / n_angular)
    return nodes, weights


def fourier_fractional_norm(f, s: float, grid: int = 64, box: float | None = None, center=None,
                            velocity_nodes=None, warn: bool = True) -> float:
    """``||f||_{H^s}`` via the FFT on a periodic box, reduced over a velocity rule.

    ``norm^2 = sum_k w_k (h^3/N^3) sum_xi (1+|xi|^2)^s |FFT f(., v_k)|^2``.
    The box defaults to four times the support diameter around the
    support domain's center.
    """
    if grid & (grid - 1):
        raise ValueError("grid must be a power of two")
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1)")
    dom = f.domain
    if box is None:
        if dom is None:
            raise ValueError("box size needed for functions without a support domain")
        box = 4.0 * dom.diameter
    if center is None:
        center = dom.interior_point if dom is not None else np.zeros(3)
    center = np.asarray(center, dtype=float)
    h = box / grid
    ax = (np.arange(grid) - grid / 2) * h
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3) + center
    xi1 = 2 * math.pi * np.fft.fftfreq(grid, d=h)
    K2 = xi1[:, None, None] ** 2 + xi1[None, :, None] ** 2 + xi1[None, None, :] ** 2
    mult = (1 + K2) ** s
    top = np.sqrt(K2) > 0.5 * math.pi / h
    nodes, weights = velocity_nodes if velocity_nodes is not None else velocity_rule()
    total, top_e = [], []
    for vk, wk in zip(nodes, weights):
        u = f(X, np.broadcast_to(vk, X.shape)).reshape(grid, grid, grid)
        U2 = np.abs(np.fft.fftn(u)) ** 2
        e = mult * U2
        total.append(wk * h**3 / grid**3 * float(e.sum()))
        top_e.append(wk * h**3 / grid**3 * float(e[top].sum()))
    tot = ordered_sum(total)
    if warn and tot > 0 and ordered_sum(top_e) > 0.01 * tot:
        warnings.warn("more than 1% of the spectral energy lies in the top octave", AliasWarning, stacklevel=2)
    return math.sqrt(max(tot, 0.0))


def gaussian_hs_norm(sigma: float, s: float) -> float:
    """``||e^{-|x|^2/(2 sigma^2)}||_{H^s}`` from the radial spectral integral."""
    def g(k):
        return (1 + k * k) ** s * math.exp(-(sigma * k) ** 2) * k * k

    val, _ = integrate.quad(g, 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return math.sqrt((2 * math.pi) ** -3 * (2 * math.pi * sigma**2) ** 3 * 4 * math.pi * val)


def equivalence_ratio(f, s: float, budget: int, seed: int = 0, support=None, grid: int = 64, box: float | None = None,
                      velocity_nodes=None, **kw) -> float:
    """``||f||_{H^s} / sqrt(||f||^2_{L^2} + |f|^2_{W^{s,2}})`` for a compactly supported ``f``.

    ``support`` is a convex domain containing the support of ``f``; the
    Slobodeckij part is the whole-space seminorm of the zero extension
    (interior shells plus the exact exterior term).
    """
    support = support or f.domain
    F = fourier_fractional_norm(f, s, grid, box, support.interior_point, velocity_nodes)
    L2 = fourier_fractional_norm(f, 0.0, grid, box, support.interior_point, velocity_nodes, warn=False)
    est = slobodeckij_multi(support, f, [s], budget, seed, zero_extend=True, warn=False, **kw)[0]
    return F / math.sqrt(L2**2 + est.value)


# ---------------------------------------------------------------- multiplier decay

def multiplier_integral(xi: float, nu0: float) -> float:
    """``M(xi) = int_R (nu0^2 + xi^2 t^2)^{-2/3} dt`` by adaptive quadrature.

    ``[0, 1]`` directly and the tail through ``t = 1/w``, which turns it
    into ``int_0^1 w^{-2/3} (nu0^2 w^2 + xi^2)^{-2/3} dw`` with an algebraic
    endpoint weight.
    """
    if xi <= 0 or nu0 <= 0:
        raise ValueError("xi and nu0 must be positive")
    a, ea = integrate.quad(lambda t: (nu0**2 + (xi * t) ** 2) ** (-2.0 / 3.0), 0, 1, epsabs=0, epsrel=1e-13,
                           limit=200)
    b, eb = integrate.quad(lambda w: (nu0**2 * w * w + xi * xi) ** (-2.0 / 3.0), 0, 1, weight="alg",
                           wvar=(-2.0 / 3.0, 0.0), epsabs=0, epsrel=1e-13, limit=200)
    if ea + eb > 1e-10 * (a + b):
        raise QuadratureFailure("multiplier integral did not reach tolerance")
    return 2.0 * (a + b)


MULTIPLIER_CONSTANT = float(special.beta(0.5, 1.0 / 6.0))  # int_R (1+u^2)^{-2/3} du


@dataclass(frozen=True)
class MultiplierReport:
    xi: tuple
    M: tuple
    products: tuple
    expected: float
    max_rel_deviation: float
    nu0_exponent: float


def multiplier_decay_check(model, s_unused=None, xi_magnitudes=(1, 2, 4, 8, 16)) -> MultiplierReport:
    """``|xi| M(|xi|)`` against ``nu0^{-1/3} B(1/2, 1/6)`` and the ``nu0`` scaling exponent."""
    xi = tuple(float(x) for x in xi_magnitudes)
    M = tuple(multiplier_integral(x, model.nu0) for x in xi)
    prod = tuple(x * m for x, m in zip(xi, M))
    expected = model.nu0 ** (-1.0 / 3.0) * MULTIPLIER_CONSTANT
    dev = max(abs(p / expected - 1) for p in prod)
    expo = math.log(multiplier_integral(1.0, 8 * model.nu0) / multiplier_integral(1.0, model.nu0)) / math.log(8)
    return MultiplierReport(xi, M, prod, expected, dev, expo)


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepRow:
    term: str
    estimate: SeminormEstimate

    def csv(self):
        e = self.estimate
        return [self.term, e.s, e.value, e.stderr, e.samples, int(e.flagged)]


def regularity_sweep(domain, f_builder, s_list, budget: int, seed: int, workers: int = 1, **kw):
    """Seminorm table over terms and orders with common random numbers per term.

    ``f_builder`` maps the domain to ``{term: (PhaseFunction, options)}``;
    options are passed to :func:`slobodeckij_multi` (e.g. ``zero_extend``,
    ``budget_scale``).  The domain must satisfy ``diam <= 1`` so the
    estimates are monotone in ``s`` sample by sample.
    """
    s_list = [float(s) for s in s_list]
    if s_list != sorted(s_list):
        raise ValueError("s_list must be sorted ascending")
    if domain.diameter > 1 + 1e-12:
        raise ValueError("rescale the domain to diameter <= 1 first")
    rows = []
    for term, (f, opts) in f_builder(domain).items():
        opts = dict(opts)
        b = int(budget * opts.pop("budget_scale", 1.0))
        s_term = opts.pop("s_list", s_list)
        for est in slobodeckij_multi(domain, f, s_term, b, seed, workers=workers, **{**kw, **opts}):
            rows.append(SweepRow(term, est))
    return rows


def grid_l2_norm(f, grid: int = 64, box: float | None = None, center=None, velocity_nodes=None) -> float:
    """``sqrt(sum_k w_k h^3 sum_x |f(x, v_k)|^2)`` on the same grid as :func:`fourier_fractional_norm`."""
    dom = f.domain
    box = box if box is not None else 4.0 * dom.diameter
    center = np.asarray(center if center is not None else dom.interior_point, dtype=float)
    h = box / grid
    ax = (np.arange(grid) - grid / 2) * h
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3) + center
    nodes, weights = velocity_nodes if velocity_nodes is not None else velocity_rule()
    tot = ordered_sum(wk * h**3 * float(np.sum(f(X, np.broadcast_to(vk, X.shape)) ** 2)) for vk, wk in zip(nodes, weights))
    return math.sqrt(tot)
