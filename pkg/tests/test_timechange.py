import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import flowlab as fl
from flowlab.errors import DivergedDenominator, EmptySamples, NotInvertible
from flowlab.sampling import rng_for
from flowlab.speed import default_flat_profile, flat_field
from flowlab.timechange import (
    SpeedIntegrand,
    AdditiveClock,
    TimeChangedFlow,
    constant_clock,
    expected_gamma,
    flow_trajectories,
    gamma,
    orbit_equivalence_check,
    phi_advance,
    push_measure_gamma,
    pushforward_density,
    tau,
    theta,
    time_changed_flow,
)

safe_coord = st.floats(0.01, 0.99)


@pytest.fixture(scope="module")
def quad_clock(cat_flow, quad_field):
    from flowlab.timechange import clock_from_speed_field

    return clock_from_speed_field(cat_flow, quad_field)


@pytest.fixture(scope="module")
def quad_tc(quad_clock):
    return TimeChangedFlow(quad_clock)


def q_at(*coords, height=0.3):
    return fl.SuspensionPoint(fl.TorusPoint(coords), height)


def test_theta_constant_clocks(cat_flow):
    q = q_at(0.2, 0.7)
    assert theta(constant_clock(cat_flow, 1.0), q, 3.7) == pytest.approx(3.7, abs=1e-12)
    assert theta(constant_clock(cat_flow, 2.0), q, 3.7) == pytest.approx(7.4, abs=1e-12)
    assert theta(constant_clock(cat_flow, 2.0), q, 0.0) == 0.0
    with pytest.raises(ValueError):
        theta(constant_clock(cat_flow, 1.0), q, -1.0)


@given(
    x=st.tuples(safe_coord, safe_coord),
    h=st.floats(0.0, 0.99),
    s=st.floats(0.0, 6.0),
    t=st.floats(0.0, 6.0),
)
@settings(max_examples=25, deadline=None)
def test_cocycle_property(cat_flow, quad_clock, x, h, s, t):
    q = fl.SuspensionPoint(fl.TorusPoint(x), h)
    lhs = theta(quad_clock, q, s + t)
    rhs = theta(quad_clock, q, s) + theta(
        quad_clock, fl.suspension_advance(cat_flow, q, s), t
    )
    assert abs(lhs - rhs) < 1e-9


def test_tau_linear_clock(cat_flow):
    tc = TimeChangedFlow(constant_clock(cat_flow, 2.0))
    q = q_at(0.2, 0.7)
    assert tau(tc, q, 1.0) == pytest.approx(0.5, abs=1e-8)
    assert tau(tc, q, 0.0) == 0.0


def test_tau_roundtrip(quad_tc, quad_clock):
    q = q_at(0.44, 0.17, height=0.62)
    for s in (0.3, 2.7, 11.0):
        assert abs(tau(quad_tc, q, theta(quad_clock, q, s)) - s) <= 10 * quad_tc.inversion_tol


def test_tau_monotone_in_t(quad_tc):
    q = q_at(0.15, 0.85, height=0.4)
    ts = np.linspace(0.1, 6.0, 25)
    taus = [tau(quad_tc, q, float(t)) for t in ts]
    assert all(b > a for a, b in zip(taus, taus[1:]))


def test_tau_not_invertible_when_clock_is_too_slow(cat_flow):
    # the clock accrues so slowly that the target lies beyond the search
    # horizon: the inversion reports failure instead of walking forever
    tc = TimeChangedFlow(constant_clock(cat_flow, 1e-9), inversion_horizon=1e5)
    with pytest.raises(NotInvertible):
        tau(tc, q_at(0.2, 0.7), 0.01)


def test_phi_advance_identity_and_scaling(cat_flow):
    q = q_at(0.2, 0.7)
    tc1 = TimeChangedFlow(constant_clock(cat_flow, 1.0))
    a = phi_advance(tc1, q, 1.3)
    b = fl.suspension_advance(cat_flow, q, 1.3)
    assert fl.dist_susp(cat_flow, a, b) < 1e-8
    tc2 = TimeChangedFlow(constant_clock(cat_flow, 2.0))
    a = phi_advance(tc2, q, 1.0)
    b = fl.suspension_advance(cat_flow, q, 0.5)
    assert fl.dist_susp(cat_flow, a, b) < 1e-8


def test_phi_fixes_singular_point(cat_flow, quad_tc, marked_point):
    assert phi_advance(quad_tc, marked_point, 7.0) == marked_point


def test_phi_flow_property(cat_flow, quad_tc):
    rng = rng_for(11, 1)
    for _ in range(4):
        q = fl.SuspensionPoint(fl.TorusPoint(tuple(rng.random(2))), float(rng.random()))
        s, t = 1.7, 2.4
        a = phi_advance(quad_tc, q, t + s)
        b = phi_advance(quad_tc, phi_advance(quad_tc, q, s), t)
        assert fl.dist_susp(cat_flow, a, b) < 1e-6 * (1.0 + t + s)


def test_gamma_constant_fields():
    assert gamma(fl.constant_field(1.0), fl.TorusPoint((0.2, 0.3))).value == 1.0
    assert gamma(fl.constant_field(0.5), fl.TorusPoint((0.2, 0.3))).value == 2.0


def test_gamma_matches_theta_identity(cat_map, cat_flow, quad_field):
    # two independent computations of the same quantity
    from flowlab.timechange import clock_from_speed_field

    clock = clock_from_speed_field(cat_flow, quad_field)
    x = fl.TorusPoint((0.61, 0.33))
    g = gamma(quad_field, x).value
    th = theta(clock, fl.SuspensionPoint(x, 0.0), 1.0)
    assert g == pytest.approx(th, abs=1e-8)


def test_gamma_diverges_on_singular_fiber(cat_map, quad_field, marked_point):
    pre = fl.apply_base(cat_map, marked_point.base, -1)
    rep = gamma(quad_field, pre)
    assert rep.diverged and rep.value is None
    rep = gamma(quad_field, marked_point.base)
    assert rep.diverged


def test_gamma_lower_bound_from_shell(cat_map, cat_flow, marked_point):
    # fibers ending inside shell i spend at least the nested window below the
    # shell bound: gamma >= w / beta_{i-1} with w = min(l_trail, shell radius)
    lookup = lambda i: max(i - 1, 1)
    from flowlab.speed import build_flat_profile, flat_field

    small_l = lambda j: 0.01 / (j + 1) ** 2
    prof = build_flat_profile(lookup, small_l, 1)
    field = flat_field(cat_map, marked_point, 0.2, prof)
    for i in (2, 3):
        shell = field.flat_shell_radius(i)
        y = fl.TorusPoint(tuple(marked_point.base.as_array() + shell / 4.0))
        x = fl.apply_base(cat_map, y, -1)
        w = min(small_l(1 + i), shell / 2.0)
        rep = gamma(field, x)
        bound = w / prof.beta(i - 1)
        assert rep.diverged or rep.value >= bound


def test_expected_gamma_trivial_and_errors(quad_field):
    samples = np.array([[0.1, 0.2], [0.8, 0.9], [0.52, 0.11]])
    rep = expected_gamma(fl.constant_field(1.0), samples)
    assert rep.value == 1.0 and not rep.diverged
    with pytest.raises(EmptySamples):
        expected_gamma(quad_field, np.empty((0, 2)))


def test_expected_gamma_workers_deterministic(quad_field, small_cat_cloud):
    samples = small_cat_cloud[:96]
    a = expected_gamma(quad_field, samples, workers=1)
    b = expected_gamma(quad_field, samples, workers=3)
    assert a.value == b.value and a.trace == b.trace


def test_push_measure_gamma_normalization(cat_map, cat_flow):
    field = fl.constant_field(1.0)
    # constant fields carry no base map; use a quadratic far-off region instead
    samples = np.array([[0.15, 0.25], [0.55, 0.75], [0.9, 0.4]])
    p = fl.SuspensionPoint(fl.TorusPoint((0.0, 0.0)), 0.0)
    unit = fl.quadratic_field(cat_map, p, 0.05)
    one = push_measure_gamma(unit, samples, lambda c, h: np.ones(h.shape[0]))
    assert one == pytest.approx(1.0, abs=1e-9)


def test_push_measure_gamma_height_observable(cat_map):
    # at unit speed the transported mean of a height observable is its
    # fiber integral: int_0^1 xi(s) ds
    p = fl.SuspensionPoint(fl.TorusPoint((0.0, 0.0)), 0.0)
    near_unit = fl.quadratic_field(cat_map, p, 0.02)
    rng = rng_for(5, 2)
    samples = 0.25 + 0.5 * rng.random((12, 2))  # stay away from the tiny chart
    xi = lambda c, h: np.sin(2 * np.pi * h) ** 2
    got = push_measure_gamma(near_unit, samples, xi)
    assert got == pytest.approx(0.5, abs=1e-6)


def test_push_measure_gamma_diverged_denominator(cat_map, marked_point):
    from flowlab.speed import build_flat_profile, flat_field

    prof = build_flat_profile(lambda i: 1000, lambda j: 1e-9, 1)
    field = flat_field(cat_map, marked_point, 0.2, prof)
    bad = np.vstack([marked_point.base.as_array(), [[0.9, 0.9]]])
    with pytest.raises(DivergedDenominator):
        push_measure_gamma(field, bad, lambda c, h: np.ones(h.shape[0]))


def test_pushforward_density_constant(cat_map):
    coords = np.random.default_rng(0).random((64, 2))
    heights = np.random.default_rng(1).random(64)
    est = pushforward_density(fl.constant_field(0.5), coords, heights)
    assert est.value == pytest.approx(2.0)
    region = lambda c, h: (h < 0.5).astype(float)
    est = pushforward_density(fl.constant_field(0.5), coords, heights, region)
    assert est.value == pytest.approx(2.0 * np.mean(heights < 0.5))


def test_pushforward_density_matches_ratio_transport(cat_map, quad_field, marked_point):
    # Monte Carlo agreement between the fiber-ratio transport and the
    # reweighted-mass estimate, for a smooth observable supported away from p
    from flowlab.numerics import smoothstep_flat

    rng = rng_for(5, 3)
    base = rng.random((4000, 2))
    heights = rng.random(4000)
    x0 = marked_point.base.as_array()

    def xi(c, h):
        d = np.max(np.abs((c - x0 + 0.5) % 1.0 - 0.5), axis=1)
        return smoothstep_flat((d - 0.25) / 0.1) * smoothstep_flat((0.25 - np.abs(h - 0.5)) / 0.1)

    lhs = push_measure_gamma(quad_field, base[:600], xi)
    dens = pushforward_density(quad_field, base, heights, xi)
    mass = pushforward_density(quad_field, base, heights)
    assert lhs == pytest.approx(dens.value / mass.value, rel=0.15)


def test_orbit_equivalence_trivial_and_linear(cat_flow):
    q = q_at(0.21, 0.63, height=0.4)
    f1 = TimeChangedFlow(constant_clock(cat_flow, 1.0))
    f2 = TimeChangedFlow(constant_clock(cat_flow, 2.0))
    same = orbit_equivalence_check(f1, f1, q, 4.0, n_samples=5)
    for row in same.rows:
        assert row.t == pytest.approx(row.s, abs=1e-7)
    half = orbit_equivalence_check(f1, f2, q, 4.0, n_samples=5)
    for row in half.rows:
        assert row.t == pytest.approx(row.s / 2.0, abs=1e-7)
    assert half.monotone


def test_orbit_equivalence_rejects_mismatched_flows(cat_flow, golden_rotation):
    other = fl.SuspensionFlow(golden_rotation)
    f1 = TimeChangedFlow(constant_clock(cat_flow, 1.0))
    f2 = TimeChangedFlow(constant_clock(other, 1.0))
    with pytest.raises(ValueError):
        orbit_equivalence_check(f1, f2, q_at(0.2, 0.3), 1.0)


def test_flow_trajectories_match_scalar_path(cat_flow, quad_field):
    tc = time_changed_flow(cat_flow, quad_field)
    rng = rng_for(9, 1)
    coords = rng.random((40, 2))
    heights = rng.random(40)
    times = np.arange(0.0, 4.01, 0.5)
    traj = flow_trajectories(tc, coords, heights, times, sub_step=0.02)
    bases, hts = traj.positions(len(times) - 1)
    errs = []
    for i in range(40):
        q = fl.SuspensionPoint(fl.TorusPoint(tuple(coords[i])), float(heights[i]))
        ref = phi_advance(tc, q, 4.0)
        got = fl.SuspensionPoint(
            fl.TorusPoint(tuple(bases[i])), min(float(hts[i]), 1.0 - 1e-12)
        )
        errs.append(fl.dist_susp(cat_flow, ref, got))
    # stepping kinks at roof crossings cost O(h^2) locally; the engine is
    # meant for covering-scale distances, the scalar path for precision
    assert max(errs) < 2e-4
    assert np.median(errs) < 1e-6


def test_suspension_trajectories_are_exact(cat_flow):
    rng = rng_for(9, 2)
    coords = rng.random((10, 2))
    heights = rng.random(10)
    times = np.arange(0.0, 3.01, 0.25)
    traj = flow_trajectories(cat_flow, coords, heights, times)
    bases, hts = traj.positions(7)  # t = 1.75
    for i in range(10):
        ref = fl.suspension_advance(
            cat_flow, fl.SuspensionPoint(fl.TorusPoint(tuple(coords[i])), float(heights[i])), 1.75
        )
        assert fl.dist_base(ref.base, fl.TorusPoint(tuple(bases[i]))) < 1e-12
        assert abs(ref.height - hts[i]) < 1e-6
