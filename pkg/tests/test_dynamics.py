import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import flowlab as fl

safe_coord = st.floats(0.01, 0.99)


def test_fixed_point_of_cat_map(cat_map):
    x = fl.TorusPoint((0.0, 0.0))
    assert fl.apply_base(cat_map, x, 5).coords == (0.0, 0.0)


def test_cat_map_half_half(cat_map):
    y = fl.apply_base(cat_map, fl.TorusPoint((0.5, 0.5)), 1)
    assert y.coords == (0.5, 0.0)


def test_golden_rotation_two_steps(golden_rotation):
    y = fl.apply_base(golden_rotation, fl.TorusPoint((0.0,)), 2)
    assert y.coords[0] == pytest.approx(0.2360679775, abs=1e-9)


def test_invalid_matrix_rejected():
    with pytest.raises(ValueError):
        fl.BaseMap("toral_automorphism", matrix=((2, 0), (0, 2)))


def test_dist_base_wraps():
    assert fl.dist_base(fl.TorusPoint((0.1,)), fl.TorusPoint((0.9,))) == pytest.approx(0.2)
    x = fl.TorusPoint((0.3, 0.8))
    assert fl.dist_base(x, x) == 0.0


def test_suspension_advance_examples(cat_flow):
    x = fl.TorusPoint((0.2, 0.7))
    q = fl.SuspensionPoint(x, 0.3)
    r = fl.suspension_advance(cat_flow, q, 0.4)
    assert r.base == x and r.height == pytest.approx(0.7)
    assert fl.suspension_advance(cat_flow, q, 0.0) == q
    r = fl.suspension_advance(cat_flow, fl.SuspensionPoint(x, 0.5), 0.5)
    assert r.base == fl.apply_base(cat_flow.base_map, x) and r.height == 0.0


def test_dist_susp_across_identification(cat_flow):
    x = fl.TorusPoint((0.2, 0.7))
    q = fl.SuspensionPoint(x, 0.95)
    w = fl.SuspensionPoint(fl.apply_base(cat_flow.base_map, x), 0.05)
    d = fl.dist_susp(cat_flow, q, w)
    assert d == pytest.approx(0.1, abs=1e-12)
    # path-length oracle: the flow connects them in time 0.1, so d <= 0.1
    assert d <= 0.1 + 1e-12


def test_identified_representatives_at_zero_distance(cat_flow):
    x = fl.TorusPoint((0.31, 0.17))
    top = fl.suspension_advance(cat_flow, fl.SuspensionPoint(x, 0.5), 0.5)
    assert fl.dist_susp(cat_flow, top, fl.SuspensionPoint(fl.apply_base(cat_flow.base_map, x), 0.0)) == 0.0


@given(
    x=st.tuples(safe_coord, safe_coord),
    s=st.floats(0.01, 0.94),
    t1=st.floats(0.0, 4.0),
    t2=st.floats(0.0, 4.0),
)
@settings(max_examples=60, deadline=None)
def test_flow_property(cat_flow, x, s, t1, t2):
    q = fl.SuspensionPoint(fl.TorusPoint(x), s)
    a = fl.suspension_advance(cat_flow, q, t1 + t2)
    b = fl.suspension_advance(cat_flow, fl.suspension_advance(cat_flow, q, t2), t1)
    assert fl.dist_susp(cat_flow, a, b) < 1e-12 * (1.0 + t1 + t2)


@given(x=st.tuples(safe_coord, safe_coord), n=st.integers(-8, 8))
@settings(max_examples=60, deadline=None)
def test_apply_base_inverse(cat_map, x, n):
    p = fl.TorusPoint(x)
    back = fl.apply_base(cat_map, fl.apply_base(cat_map, p, n), -n)
    assert fl.dist_base(p, back) < 1e-12


@given(
    pts=st.lists(
        st.tuples(st.tuples(safe_coord, safe_coord), st.floats(0.0, 0.99)),
        min_size=3,
        max_size=3,
    )
)
@settings(max_examples=60, deadline=None)
def test_dist_susp_metric_properties(cat_flow, pts):
    qs = [fl.SuspensionPoint(fl.TorusPoint(c), h) for c, h in pts]
    d01 = fl.dist_susp(cat_flow, qs[0], qs[1])
    d10 = fl.dist_susp(cat_flow, qs[1], qs[0])
    assert d01 == pytest.approx(d10, abs=1e-12)
    d02 = fl.dist_susp(cat_flow, qs[0], qs[2])
    d12 = fl.dist_susp(cat_flow, qs[1], qs[2])
    assert d02 <= d01 + d12 + 1e-12


def test_negative_time_advance_round_trip(cat_flow):
    q = fl.SuspensionPoint(fl.TorusPoint((0.41, 0.13)), 0.6)
    r = fl.suspension_advance(cat_flow, fl.suspension_advance(cat_flow, q, 3.7), -3.7)
    assert fl.dist_susp(cat_flow, q, r) < 1e-12


def test_entropy_oracles(cat_map, golden_rotation):
    lam = (3.0 + np.sqrt(5.0)) / 2.0
    assert cat_map.entropy_oracle() == pytest.approx(np.log(lam), rel=1e-12)
    assert golden_rotation.entropy_oracle() == 0.0
