import math

import numpy as np
import pytest
from scipy import integrate

from kinlab.collision import CollisionModel, VelocityQuadrature, kernel, nu
from kinlab.errors import BudgetExceeded, MembershipViolation, RayDegenerate
from kinlab.geometry import Ball
from kinlab.phase import PhaseFunction, constant, gaussian_velocity, separable, smooth_bump
from kinlab.transport import (BoundaryData, J_function, K_function, S_function, apply_J, apply_S_omega,
                              apply_S_wholespace, change_of_variable_check, cone_jacobian, picard_batch,
                              picard_function, picard_term, sk_square_bound_check, truncated_series_solve,
                              zero_extension)

E1 = np.array([1.0, 0.0, 0.0])
ONE = BoundaryData("constant", 0.0, 1.0)
ZERO = BoundaryData("gaussian", 0.1, 0.0)
MAXWELL = CollisionModel(gamma=0.0)


# ---------------------------------------------------------------- boundary data

def test_boundary_data_validation():
    with pytest.raises(ValueError):
        BoundaryData("constant", 0.1, 1.0)
    with pytest.raises(ValueError):
        BoundaryData("gaussian", 0.25, 1.0)
    with pytest.raises(ValueError):
        BoundaryData.from_spec({"kind": "gaussian", "width": 2})
    assert BoundaryData.from_spec(BoundaryData("lipschitz_bump", 0.1, 2.0).to_json()) == \
        BoundaryData("lipschitz_bump", 0.1, 2.0)


def test_boundary_envelope(ellipsoid, rng):
    for data in (ONE, BoundaryData("gaussian", 0.1, 2.0), BoundaryData("lipschitz_bump", 0.2, 1.0, (3.0, 1.0, 0))):
        assert data.envelope_check(ellipsoid, rng) == (0, 0)


# ---------------------------------------------------------------- J and S

def test_apply_J_examples(ball, model):
    assert apply_J(ball, MAXWELL, ONE, [0, 0, 0], [2.0, 0, 0]) == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert apply_J(ball, model, ZERO, [0, 0, 0], [2.0, 0, 0]) == 0.0
    assert apply_J(ball, model, BoundaryData("gaussian", 0.1, 1.0), [0, 0, 0], E1) == \
        pytest.approx(math.exp(-2.1), rel=1e-14)
    with pytest.raises(RayDegenerate):
        apply_J(ball, model, ONE, [1.0, 0, 0], E1)


def test_J_function_matches_pointwise(ellipsoid, model, rng):
    data = BoundaryData("lipschitz_bump", 0.1, 1.0)
    J = J_function(ellipsoid, model, data)
    x = ellipsoid.sample_interior(rng, 20)
    v = rng.standard_normal((20, 3))
    ref = [apply_J(ellipsoid, model, data, xi, vi) for xi, vi in zip(x, v)]
    assert np.allclose(J(x, v), ref, rtol=1e-13)


def test_apply_S_examples(ball, model, rng):
    one = constant(1.0, domain=ball)
    assert apply_S_omega(ball, MAXWELL, one, [0, 0, 0], E1) == pytest.approx(1 - math.exp(-1), rel=1e-12)
    lin = PhaseFunction(lambda x, v: x[:, 0], domain=ball)
    assert apply_S_omega(ball, MAXWELL, lin, [0, 0, 0], E1) == pytest.approx(2 / math.e - 1, rel=1e-12)
    for _ in range(5):
        x = ball.sample_interior(rng, 1)[0]
        v = 2 * rng.standard_normal(3)
        tau = ball.forward_exit(x[None], -v[None])[0]
        r = nu(model, v)
        assert apply_S_omega(ball, model, one, x, v) == pytest.approx((1 - math.exp(-r * tau)) / r, rel=1e-12)


def test_S_function_matches_adaptive(ellipsoid, model, rng):
    h = separable(smooth_bump((0.5, 0, 0), 1.0), gaussian_velocity(0.5), domain=ellipsoid)
    S = S_function(ellipsoid, model, h, chord_nodes=128)
    x = ellipsoid.sample_interior(rng, 10)
    v = rng.standard_normal((10, 3))
    ref = [apply_S_omega(ellipsoid, model, h, xi, vi) for xi, vi in zip(x, v)]
    assert np.allclose(S(x, v), ref, rtol=1e-6, atol=1e-12)


def test_S_linear_and_bounded(ball, model, rng):
    f = PhaseFunction(lambda x, v: np.sin(3 * x[:, 0]) * np.exp(-np.sum(v * v, 1)), domain=ball)
    g = PhaseFunction(lambda x, v: np.cos(x[:, 1] + v[:, 2]), domain=ball)
    for _ in range(5):
        x, v = 0.8 * ball.sample_interior(rng, 1)[0], rng.standard_normal(3)
        lhs = apply_S_omega(ball, model, f.scaled(2.0) + g, x, v)
        rhs = 2 * apply_S_omega(ball, model, f, x, v) + apply_S_omega(ball, model, g, x, v)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-14)
        # |S h| <= sup|h| / nu0
        assert abs(apply_S_omega(ball, model, g, x, v)) <= 1.0 / model.nu0 + 1e-12


def test_wholespace_restriction_identity(ball, model, rng):
    one = constant(1.0, domain=ball)
    z = zero_extension(one)
    assert z.support == "whole_space"
    for _ in range(10):
        x = ball.sample_interior(rng, 1)[0]
        v = rng.standard_normal(3)
        assert apply_S_wholespace(model, z, x, v) == pytest.approx(apply_S_omega(ball, model, one, x, v), abs=1e-10)
    assert apply_S_wholespace(model, constant(0.0, "whole_space"), [0, 0, 0], E1) == 0.0
    # a backward ray that never meets the support
    assert apply_S_wholespace(model, z, [3.0, 0, 0], [-1.0, 0, 0]) == 0.0


def test_wholespace_gaussian_dense(model):
    h = PhaseFunction(lambda x, v: np.exp(-np.sum(x * x, 1)), "whole_space")
    x, v = np.array([0.3, -0.2, 0.5]), np.array([0.4, 1.0, -0.3])
    r = nu(model, v)
    dense = integrate.quad(lambda t: math.exp(-r * t - np.sum((x - t * v) ** 2)), 0, np.inf,
                           epsabs=0, epsrel=1e-12)[0]
    assert apply_S_wholespace(model, h, x, v) == pytest.approx(dense, rel=1e-9)


# ---------------------------------------------------------------- K on phase functions

def test_K_radial_table_matches_direct(model, rng):
    q = VelocityQuadrature(n_r=16, n_mu=16, n_phi=8)
    a = smooth_bump((0, 0, 0), 0.8)
    h_fast = separable(a, gaussian_velocity(0.3), radial_v=True)
    h_slow = separable(a, gaussian_velocity(0.3))
    x = 0.5 * rng.standard_normal((20, 3))
    v = 2 * rng.standard_normal((20, 3))
    fast, slow = K_function(model, q, h_fast)(x, v), K_function(model, q, h_slow)(x, v)
    assert np.allclose(fast, slow, rtol=1e-6, atol=1e-12)


# ---------------------------------------------------------------- Picard terms

def _g1_oracle(n_s=12):
    """g1(0, e1) on the unit ball, g = 1, nu = 1 + |v|, by nested scipy quadrature.

    With the pole along e1 the inner velocity integral is axisymmetric, and
    the backward exit time from y = -s e1 has the sphere closed form.
    """
    m = CollisionModel()

    def KJ(s):
        y = -s * E1

        def f(mu, rho):
            vs = E1 + rho * np.array([mu, math.sqrt(max(1 - mu * mu, 0.0)), 0.0])
            r2 = vs @ vs
            b = y @ vs
            t = (b + math.sqrt(b * b + r2 * (1 - y @ y))) / r2
            return 2 * math.pi * rho * rho * kernel(m, E1, vs) * math.exp(-(1 + math.sqrt(r2)) * t)

        return integrate.dblquad(f, 0, 16, -1, 1, epsabs=1e-10, epsrel=1e-7)[0]

    t, w = np.polynomial.legendre.leggauss(n_s)
    s, w = (t + 1) / 2, w / 2
    return sum(wi * math.exp(-2 * si) * KJ(si) for si, wi in zip(s, w))


def test_picard_first_term_dense_oracle(ball, model):
    q = VelocityQuadrature(n_r=24, n_mu=24, n_phi=8)
    val = picard_term(ball, model, q, ONE, 1, [0, 0, 0], E1, chord_nodes=16)
    assert val == pytest.approx(_g1_oracle(), rel=5e-3)


def test_picard_basic(ball, model, coarse_quad):
    d = BoundaryData("gaussian", 0.1, 1.0)
    assert picard_term(ball, model, coarse_quad, d, 0, [0.1, 0, 0], E1) == apply_J(ball, model, d, [0.1, 0, 0], E1)
    assert picard_term(ball, model, coarse_quad, ZERO, 1, [0, 0, 0], E1) == 0.0
    with pytest.raises(ValueError):
        picard_term(ball, model, coarse_quad, d, 4, [0, 0, 0], E1)
    with pytest.raises(BudgetExceeded):
        picard_term(ball, model, coarse_quad, d, 3, [0, 0, 0], E1, budget=1e6)
    with pytest.raises(RayDegenerate):
        picard_term(ball, model, coarse_quad, d, 1, [1.0, 0, 0], E1)


def test_picard_linear_in_data(ellipsoid, model, coarse_quad):
    x, v = np.array([[0.3, 0.1, -0.2]]), np.array([[0.5, -1.0, 0.2]])
    a = picard_batch(ellipsoid, model, coarse_quad, BoundaryData("gaussian", 0.1, 1.0), 2, x, v, 4)
    b = picard_batch(ellipsoid, model, coarse_quad, BoundaryData("gaussian", 0.1, 3.0), 2, x, v, 4)
    assert b[0] == pytest.approx(3 * a[0], rel=1e-12)


def test_picard_gaussian_propagation(ball, model):
    # |g_i| e^{a|v|^2} stays bounded across speeds
    q = VelocityQuadrature(n_r=6, n_mu=6, n_phi=4)
    a = 0.1
    data = BoundaryData("gaussian", a, 1.0)
    speeds = np.array([0.5, 1.0, 2.0, 4.0, 6.0])
    x = np.zeros((speeds.size, 3))
    v = speeds[:, None] * np.array([[0.6, 0.8, 0.0]])
    for i in range(3):
        g = picard_function(ball, model, q, data, i, 4)(x, v)
        w = np.abs(g) * np.exp(a * speeds**2)
        assert np.all(np.isfinite(w)) and np.all(w > 0)
        if i == 0:
            # the weighted boundary term is bounded by the data amplitude
            assert np.all(w <= 1.0 + 1e-12)
        else:
            # collision terms do not grow with speed
            assert w[-1] <= w[0]


def test_truncated_series(ball, model):
    coarse_quad = VelocityQuadrature(n_r=4, n_mu=4, n_phi=2)
    d = BoundaryData("gaussian", 0.1, 1.0)
    x, v = [0.2, 0.1, 0.0], [0.0, 1.0, 0.5]
    r0 = truncated_series_solve(ball, model, coarse_quad, d, x, v, 0, chord_nodes=4)
    assert r0.value == pytest.approx(apply_J(ball, model, d, x, v), rel=1e-13)
    g1 = picard_term(ball, model, coarse_quad, d, 1, x, v, chord_nodes=4)
    assert r0.residual == pytest.approx(abs(g1), rel=1e-12)
    value, residual = truncated_series_solve(ball, model, coarse_quad, ZERO, x, v, 2, chord_nodes=4)
    assert (value, residual) == (0.0, 0.0)
    rng = np.random.default_rng(3)
    pts = [(0.7 * ball.sample_interior(rng, 1)[0], rng.standard_normal(3)) for _ in range(3)]
    for scale, first, later in ((0.1, None, 1.0), (0.01, 0.5, 0.5)):
        weak = CollisionModel(kernel_scale=scale)
        for xi, vi in pts:
            r = truncated_series_solve(ball, weak, coarse_quad, d, xi, vi, 2, chord_nodes=4)
            mags = np.abs(r.terms + (r.residual,))
            ratios = mags[1:] / mags[:-1]
            # past the boundary term the series contracts
            assert np.all(ratios[1:] < later)
            if first is not None:
                assert ratios[0] < first and not r.non_decay
    with pytest.raises(ValueError):
        truncated_series_solve(ball, model, coarse_quad, d, x, v, 5)


# ---------------------------------------------------------------- certificates

def test_sk_square(ball, model, coarse_quad, rng):
    zero = constant(0.0, domain=ball)
    rep = sk_square_bound_check(ball, model, coarse_quad, zero, 5, rng, chord_nodes=8)
    assert rep.violations == 0 and rep.max_ratio_sk == 0.0 and rep.max_ratio_ks == 0.0
    h = separable(smooth_bump((0.2, 0, 0), 0.7), gaussian_velocity(0.2), domain=ball)
    r1 = sk_square_bound_check(ball, model, coarse_quad, h, 10, np.random.default_rng(1), chord_nodes=8)
    r2 = sk_square_bound_check(ball, model, coarse_quad, h.scaled(2.0), 10, np.random.default_rng(1),
                               chord_nodes=8)
    assert r1.violations == 0
    assert r2.max_ratio_sk == pytest.approx(r1.max_ratio_sk, rel=1e-10)
    assert r2.max_ratio_ks == pytest.approx(r1.max_ratio_ks, rel=1e-10)


@pytest.mark.parametrize("variant", ["cov1", "cov2"])
def test_change_of_variables(ball, ellipsoid, variant, rng):
    for dom in (ball, ellipsoid):
        rep = change_of_variable_check(dom, variant, 10000, rng)
        assert rep.roundtrip_error <= 1e-10
        assert rep.membership_violations == 0
        assert rep.z_score <= 3.0


def test_change_of_variables_strict_raises(rng):
    # a loose root tolerance breaks the membership conditions; strict mode raises
    loose = Ball((1.0,)).with_tolerance(1e-2)
    rep = change_of_variable_check(loose, "cov1", 5000, rng)
    if rep.membership_violations:
        with pytest.raises(MembershipViolation):
            change_of_variable_check(loose, "cov1", 5000, np.random.default_rng(0), raise_on_violation=True)
    with pytest.raises(ValueError):
        change_of_variable_check(loose, "cov3", 10, rng)


def test_cone_jacobian(ball, ellipsoid, superellipsoid, rng):
    for dom in (ball, ellipsoid, superellipsoid):
        rep = cone_jacobian(dom, 20000, rng)
        assert rep.exact == pytest.approx(math.pi**1.5)
        assert rep.z_score <= 3.5
