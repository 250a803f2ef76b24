import math
import warnings

import numpy as np
import pytest
from scipy import integrate, special

from kinlab.collision import CollisionModel
from kinlab.errors import AliasWarning, ShellFloorDominant
from kinlab.geometry import Ball
from kinlab.parallel import chunk_plan, ordered_sum, run_chunks
from kinlab.phase import PhaseFunction, constant, gaussian_velocity, separable, smooth_bump
from kinlab.seminorm import (MULTIPLIER_CONSTANT, equivalence_ratio, fourier_fractional_norm, gaussian_hs_norm,
                             grid_l2_norm, multiplier_decay_check, multiplier_integral, regularity_sweep,
                             slobodeckij_multi, slobodeckij_seminorm, velocity_rule)

GAUSS_V = (math.pi / 2) ** 1.5  # int e^{-2|v|^2} dv


def linear_oracle(s):
    """``f = x_1 e^{-|v|^2}`` on the unit ball: ``|x-y|^2`` averaged over directions is ``r^2/3``,
    and the overlap volume of two unit balls at distance ``r`` is ``pi (4+r)(2-r)^2/12``."""
    V = lambda r: math.pi * (4 + r) * (2 - r) ** 2 / 12
    val = integrate.quad(lambda r: r ** (1 - 2 * s) * V(r), 0, 2, epsabs=0, epsrel=1e-12)[0]
    return GAUSS_V * 4 * math.pi / 3 * val


def indicator_oracle(s):
    """``1_{|x|<1/2} e^{-|v|^2/2}`` in the unit ball, by the radial two-point reduction."""
    g = lambda b, a: 2 * 8 * math.pi**2 * a * b * (abs(a - b) ** (-1 - 2 * s) - (a + b) ** (-1 - 2 * s)) / (1 + 2 * s)
    v = integrate.dblquad(g, 0, 0.5, 0.5, 1, epsabs=1e-10, epsrel=1e-9)[0]
    return v * math.pi**1.5


def test_constant_has_zero_seminorm(ball):
    for e in slobodeckij_multi(ball, constant(2.0, domain=ball), [0.2, 0.8], 2000, 0):
        assert e.value == 0.0 and e.stderr == 0.0 and not e.flagged


def test_linear_function_matches_oracle(ball):
    f = PhaseFunction(lambda x, v: x[:, 0] * np.exp(-np.sum(v * v, 1)), domain=ball)
    for e in slobodeckij_multi(ball, f, [0.25, 0.5, 0.75], 40000, 1):
        assert abs(e.value - linear_oracle(e.s)) <= 3 * e.stderr
        assert e.seminorm == pytest.approx(math.sqrt(e.value))
        assert e.value == pytest.approx(sum(e.shell_profile))


def test_indicator_finite_below_half_and_flagged_above(ball):
    f = PhaseFunction(lambda x, v: (np.sum(x * x, 1) < 0.25) * np.exp(-np.sum(v * v, 1) / 2), domain=ball)
    with pytest.warns(ShellFloorDominant):
        low, high = slobodeckij_multi(ball, f, [0.25, 0.75], 40000, 2)
    assert not low.flagged
    assert abs(low.value - indicator_oracle(0.25)) <= 3 * low.stderr
    assert high.flagged


def test_stderr_scales_with_budget(ball):
    f = PhaseFunction(lambda x, v: x[:, 0] * np.exp(-np.sum(v * v, 1)), domain=ball)
    # a proposal matched to the e^{-2|v|^2} profile keeps the error estimate itself stable
    for seed in range(3):
        a = slobodeckij_seminorm(ball, f, 0.5, 5000, seed, velocity_scale=0.5)
        b = slobodeckij_seminorm(ball, f, 0.5, 20000, seed, velocity_scale=0.5)
        assert 2 / 1.5 <= a.stderr / b.stderr <= 2 * 1.5


def test_common_random_numbers_monotone(ball):
    # on a domain of diameter <= 1 every pair weight grows with s
    small = ball.scaled(0.5)
    f = PhaseFunction(lambda x, v: np.sin(4 * x[:, 0]) * np.exp(-np.sum(v * v, 1)), domain=small)
    est = slobodeckij_multi(small, f, [0.2, 0.4, 0.6, 0.8], 5000, 7)
    vals = [e.value for e in est]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_seed_determinism_and_worker_invariance(ball):
    f = PhaseFunction(lambda x, v: x[:, 1] ** 2 * np.exp(-np.sum(v * v, 1)), domain=ball)
    a = slobodeckij_seminorm(ball, f, 0.5, 8000, 11)
    b = slobodeckij_seminorm(ball, f, 0.5, 8000, 11, workers=3)
    c = slobodeckij_seminorm(ball, f, 0.5, 8000, 12)
    assert a == b
    assert a.value != c.value


def test_zero_extension_exterior_term(ball):
    f = separable(smooth_bump((0, 0, 0), 0.9), gaussian_velocity(1.0), domain=ball)
    inner = slobodeckij_multi(ball, f, [0.4], 8000, 3)[0]
    ext = slobodeckij_multi(ball, f, [0.4], 8000, 3, zero_extend=True)[0]
    assert inner.exterior == 0.0
    assert ext.exterior > 0
    assert ext.value == pytest.approx(sum(ext.shell_profile) + ext.exterior)


def test_invalid_orders(ball):
    with pytest.raises(ValueError):
        slobodeckij_multi(ball, constant(1.0, domain=ball), [0.0, 0.5], 100, 0)


# ---------------------------------------------------------------- spectral norms

def test_velocity_rule_gaussian():
    nodes, weights = velocity_rule()
    assert np.sum(weights * np.exp(-2 * np.sum(nodes**2, 1))) == pytest.approx(GAUSS_V, rel=1e-12)


@pytest.mark.parametrize("s", [0.0, 0.5])
def test_gaussian_hs_norm(ball, s):
    sig = 0.2
    f = PhaseFunction(lambda x, v: np.exp(-np.sum(x * x, 1) / (2 * sig**2)) * np.exp(-np.sum(v * v, 1)),
                      "whole_space", domain=ball)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasWarning)
        F = fourier_fractional_norm(f, s)
    assert F / math.sqrt(GAUSS_V) == pytest.approx(gaussian_hs_norm(sig, s), rel=1e-6)


def test_gaussian_hs_norm_closed_form():
    # s = 0: the L2 norm of the Gaussian is (pi sigma^2)^{3/4}
    assert gaussian_hs_norm(0.3, 0.0) == pytest.approx((math.pi * 0.09) ** 0.75, rel=1e-12)
    # s = 1: adds the gradient energy 3/(2 sigma^2) times the L2 norm squared
    assert gaussian_hs_norm(0.3, 1.0) ** 2 == pytest.approx((math.pi * 0.09) ** 1.5 * (1 + 1.5 / 0.09), rel=1e-10)


def test_parseval(ball):
    b = smooth_bump(width=0.8)
    f = PhaseFunction(lambda x, v: b(x) * np.exp(-np.sum(v * v, 1)), "whole_space", domain=ball)
    F0 = fourier_fractional_norm(f, 0.0)
    assert F0 == pytest.approx(grid_l2_norm(f), rel=1e-12)
    rad = integrate.quad(lambda r: 4 * math.pi * r * r * math.exp(2 - 2 / (1 - r * r / 0.64)), 0, 0.8,
                         epsabs=0, epsrel=1e-12)[0]
    assert F0**2 == pytest.approx(rad * GAUSS_V, rel=1e-3)
    zero = PhaseFunction(lambda x, v: np.zeros(x.shape[0]), "whole_space", domain=ball)
    assert fourier_fractional_norm(zero, 0.5) == 0.0


def test_alias_warning_on_narrow_gaussian(ball):
    f = PhaseFunction(lambda x, v: np.exp(-np.sum(x * x, 1) / (2 * 0.05**2)), "whole_space", domain=ball)
    with pytest.warns(AliasWarning):
        fourier_fractional_norm(f, 0.5, grid=32)


@pytest.mark.filterwarnings("ignore::kinlab.errors.AliasWarning")
def test_equivalence_ratio(ball):
    # the bump edge leaves a little energy in the top octave; the resolution check bounds its effect
    f = separable(smooth_bump(width=0.8), gaussian_velocity(1.0), domain=Ball((0.8,)))
    r1 = equivalence_ratio(f, 0.5, 20000, 1)
    assert equivalence_ratio(f.scaled(2.0), 0.5, 20000, 1) == pytest.approx(r1, rel=1e-12)
    assert equivalence_ratio(f, 0.5, 20000, 1, grid=32) == pytest.approx(r1, rel=0.02)
    assert 0.05 < r1 < 5


# ---------------------------------------------------------------- multiplier

def test_multiplier_closed_form():
    exact = math.sqrt(math.pi) * special.gamma(1 / 6) / special.gamma(2 / 3)
    assert multiplier_integral(1.0, 1.0) == pytest.approx(exact, rel=1e-12)
    assert MULTIPLIER_CONSTANT == pytest.approx(exact, rel=1e-14)
    assert multiplier_integral(2.0, 1.0) == pytest.approx(multiplier_integral(1.0, 1.0) / 2, rel=1e-8)
    assert multiplier_integral(1.0, 8.0) == pytest.approx(multiplier_integral(1.0, 1.0) / 2, rel=1e-8)
    with pytest.raises(ValueError):
        multiplier_integral(0.0, 1.0)


@pytest.mark.parametrize("nu0", [1.0, 3.0])
def test_multiplier_decay_check(nu0):
    rep = multiplier_decay_check(CollisionModel(nu0=nu0))
    assert rep.max_rel_deviation <= 1e-8
    assert rep.nu0_exponent == pytest.approx(-1 / 3, abs=1e-6)
    assert rep.expected == pytest.approx(nu0 ** (-1 / 3) * MULTIPLIER_CONSTANT)


# ---------------------------------------------------------------- sweeps and reductions

def test_regularity_sweep_rows(ball):
    small = ball.scaled(0.5)
    f = PhaseFunction(lambda x, v: x[:, 0] * np.exp(-np.sum(v * v, 1)), domain=small)
    rows = regularity_sweep(small, lambda d: {"a": (f, {}), "b": (f.scaled(2.0), {"budget_scale": 0.5})},
                            [0.3, 0.6], 4000, 5)
    assert [(r.term, r.estimate.s) for r in rows] == [("a", 0.3), ("a", 0.6), ("b", 0.3), ("b", 0.6)]
    assert rows[2].estimate.samples == 2000
    assert rows[0].csv()[0] == "a"
    with pytest.raises(ValueError):
        regularity_sweep(ball, lambda d: {}, [0.3], 10, 0)
    with pytest.raises(ValueError):
        regularity_sweep(small, lambda d: {}, [0.6, 0.3], 10, 0)


def test_parallel_helpers():
    assert chunk_plan(10, 4) == [(0, 4), (4, 4), (8, 2)]

    def fn(rng, start, count):
        return float(rng.random(count).sum())

    serial = run_chunks(fn, 5, 10000, 1000, workers=1)
    threaded = run_chunks(fn, 5, 10000, 1000, workers=4)
    assert serial == threaded
    assert ordered_sum([1e16, 1.0, -1e16]) == ordered_sum([1e16, 1.0, -1e16])
