import numpy as np
import pytest

import flowlab as fl
from flowlab.errors import NotFoundWithinHorizon, UncertifiedReport
from flowlab.recurrence import (
    ball_measure_bound_check,
    empirical_recurrence,
    recurrence_constant,
    recurrence_profile,
    rotation_gap_L,
)
from flowlab.sampling import rng_for


def test_gap_oracle_golden():
    assert rotation_gap_L((fl.GOLDEN_ANGLE,), 0.1) == 7


def test_recurrence_constant_matches_oracle(golden_rotation):
    rep = recurrence_constant(golden_rotation, 0.1)
    assert rep.L == rotation_gap_L(golden_rotation.angles, 0.1) == 7
    assert rep.is_certified


def test_trivial_epsilon_gives_zero(golden_rotation, cat_map):
    assert recurrence_constant(golden_rotation, 0.6).L == 0
    assert recurrence_constant(cat_map, 0.75).L == 0


def test_monotonicity_in_epsilon(golden_rotation):
    eps = (0.3, 0.2, 0.15, 0.1, 0.05)
    Ls = [recurrence_constant(golden_rotation, e).L for e in eps]
    assert all(a <= b for a, b in zip(Ls[::-1][1:], Ls[::-1]))  # smaller eps, larger L
    assert all(l2 >= l1 for l1, l2 in zip(Ls, Ls[1:]))


def test_grid_offset_invariance(golden_rotation):
    a = recurrence_constant(golden_rotation, 0.1, grid_offset=0.0)
    b = recurrence_constant(golden_rotation, 0.1, grid_offset=0.013)
    assert a.L == b.L


def test_two_dimensional_rotation_certified():
    rot2 = fl.make_rotation(fl.GOLDEN_ANGLE, np.sqrt(2.0) - 1.0)
    rep = recurrence_constant(rot2, 0.25)
    assert rep.is_certified and rep.L > 0


def test_automorphism_has_no_constant(cat_map):
    # the fixed point at the origin never visits balls that avoid it
    with pytest.raises(NotFoundWithinHorizon):
        recurrence_constant(cat_map, 0.05, horizon=5000)


def test_empirical_recurrence_uncertified(cat_map):
    rep = empirical_recurrence(cat_map, 0.2, orbit_length=40000, rng=rng_for(3, 1))
    assert not rep.is_certified
    assert rep.L > 0


def test_recurrence_profile_shapes(golden_rotation, cat_map):
    prof = recurrence_profile(golden_rotation, range(2, 12))
    deltas = [1.0 / max(prof[i], 1) for i in sorted(prof)]
    assert all(d2 <= d1 for d1, d2 in zip(deltas, deltas[1:]))
    emp = recurrence_profile(
        cat_map, range(2, 8), rng=rng_for(3, 2), orbit_length=30000, empirical_index_cap=5
    )
    assert emp[6] == emp[7] == emp[5]  # constant extension beyond the cap


def test_ball_measure_bound(golden_rotation):
    rep = recurrence_constant(golden_rotation, 0.1)
    chk = ball_measure_bound_check(
        golden_rotation, 0.1, rep, [fl.TorusPoint((0.37,))],
        orbit_length=10**6, rng=rng_for(3, 3),
    )
    assert chk.passed
    # exact arc length 2 * eps dominates the 1/L bound
    assert chk.frequencies[0] == pytest.approx(0.2, rel=0.01)
    assert 0.2 >= chk.bound == pytest.approx(1.0 / 7.0)


def test_ball_measure_requires_certified(cat_map):
    rep = empirical_recurrence(cat_map, 0.2, orbit_length=20000, rng=rng_for(3, 4))
    with pytest.raises(UncertifiedReport):
        ball_measure_bound_check(
            cat_map, 0.2, rep, [fl.TorusPoint((0.3, 0.3))], orbit_length=1000, rng=rng_for(3, 5)
        )
