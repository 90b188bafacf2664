import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import flowlab as fl
from flowlab.speed import (
    build_flat_profile,
    default_flat_profile,
    eta_derivative,
    eta_eval,
    flat_field,
    flat_field_family,
    geometric_l_sequence,
    mollifier_h,
    mollifier_h_derivative,
    profile_to_json,
    quadratic_field,
    speed_at,
    speed_at_arrays,
)


def test_mollifier_values():
    assert mollifier_h(1.0) == pytest.approx(math.exp(-1.0))
    assert mollifier_h(0.0) == 0.0
    assert mollifier_h(-0.5) == 0.0
    assert mollifier_h(2.0) == pytest.approx(math.exp(-0.5))


@given(st.floats(-1.0, 3.0), st.floats(0.0, 0.5))
@settings(max_examples=80, deadline=None)
def test_mollifier_nondecreasing(t, dt):
    assert mollifier_h(t + dt) >= mollifier_h(t)


def test_mollifier_derivative_matches_finite_difference():
    for k in (1, 2, 3, 4):
        t, h = 0.6, 1e-4
        fd = (
            mollifier_h_derivative(t - h, k - 1) if k > 1 else mollifier_h(t - h)
        )
        hi = mollifier_h_derivative(t + h, k - 1) if k > 1 else mollifier_h(t + h)
        approx = (hi - fd) / (2 * h)
        assert mollifier_h_derivative(t, k) == pytest.approx(approx, rel=1e-5)


def test_eta_zero_and_one_regions():
    prof = default_flat_profile()
    for t in np.linspace(-1.0, 0.0, 31):
        assert eta_eval(prof, float(t)) == 0.0
    for t in np.linspace(1.0, 2.0, 31):
        assert eta_eval(prof, float(t)) == 1.0


def test_eta_rejects_out_of_domain():
    prof = default_flat_profile()
    with pytest.raises(ValueError):
        eta_eval(prof, -1.5)
    with pytest.raises(ValueError):
        eta_eval(prof, 2.5)


def test_eta_monotone_dense_grid():
    prof = default_flat_profile()
    vals = eta_eval(prof, np.linspace(-1.0, 2.0, 1201))
    assert np.all(np.diff(vals) >= -1e-15)
    assert vals.min() >= 0.0 and vals.max() <= 1.0


def test_eta_shell_bound():
    prof = default_flat_profile()
    h1 = mollifier_h(1.0)
    for k in range(0, 12):
        edge = 1.0 / (k + 2)
        ts = np.geomspace(1e-6 * edge, edge * (1 - 1e-12), 60)
        assert eta_eval(prof, ts).max() < prof.beta(k) * h1 / 2.0**k


def test_eta_derivative_against_finite_difference():
    prof = default_flat_profile()
    for t in (0.45, 0.7):  # one point in the series region, one in the blend
        h = 1e-4
        stencil = (
            eta_eval(prof, t - 2 * h)
            - 8 * eta_eval(prof, t - h)
            + 8 * eta_eval(prof, t + h)
            - eta_eval(prof, t + 2 * h)
        ) / (12 * h)
        assert eta_derivative(prof, t, 1) == pytest.approx(stencil, rel=1e-6)


def test_eta_derivative_vanishes_into_zero():
    prof = default_flat_profile()
    for k in (1, 2, 3, 4):
        vals = [abs(eta_derivative(prof, 10.0**-j, k)) for j in (1, 2, 3, 4)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-12
    assert eta_derivative(prof, -0.5, 1) == 0.0


def test_eta_derivative_rejects_high_order():
    with pytest.raises(ValueError):
        eta_derivative(default_flat_profile(), 0.3, 5)


def test_build_flat_profile_example():
    prof = build_flat_profile(lambda i: 1, lambda i: 0.5, 1)
    assert prof.beta(-1) == 1.0
    assert prof.beta(0) == pytest.approx(0.25)
    betas = prof.betas
    assert all(b2 < b1 for b1, b2 in zip(betas, betas[1:]))
    assert all(b > 0 for b in betas)


def test_build_flat_profile_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_flat_profile(lambda i: 1, lambda i: 1.5, 1)
    with pytest.raises(ValueError):
        build_flat_profile(lambda i: -2, lambda i: 0.5, 1)


def test_profile_running_minimum_guard_records_clamps():
    # a non-monotone raw formula gets clamped and the clamps are recorded
    prof = build_flat_profile(lambda i: 1, lambda i: 0.9 if i % 2 else 0.1, 1, n_shells=8)
    assert prof.provenance["clamped_indices"]
    betas = prof.betas
    assert all(b2 < b1 for b1, b2 in zip(betas, betas[1:]))


def test_profile_json_roundtrip(tmp_path):
    prof = default_flat_profile(16)
    path = tmp_path / "profile.json"
    profile_to_json(prof, path)
    data = json.loads(path.read_text())
    assert data["betas"] == list(prof.betas)
    assert data["alphas"] == list(prof.alphas)
    assert data["truncation_tol"] == prof.truncation_tol


def test_flat_speed_field_basics(cat_map, marked_point):
    field = flat_field(cat_map, marked_point, 0.2, default_flat_profile())
    assert speed_at(field, marked_point) == 0.0
    far = fl.SuspensionPoint(fl.TorusPoint((0.9, 0.2)), 0.5)
    assert speed_at(field, far) == 1.0
    # positive off p at resolvable distances, and always within [0, 1]
    rng = np.random.default_rng(0)
    coords = rng.random((500, 2))
    heights = rng.random(500)
    vals = speed_at_arrays(field, coords, heights)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    x0 = marked_point.base.as_array()
    near = x0[None, :] + np.array([[0.02, 0.0], [0.0, 0.03]])
    vals = speed_at_arrays(field, near, np.zeros(2))
    assert np.all(vals > 0.0)


def test_flat_shell_bound_in_suspension(cat_map, marked_point):
    field = flat_field(cat_map, marked_point, 0.2, default_flat_profile())
    rng = np.random.default_rng(1)
    x0 = marked_point.base.as_array()
    for i in range(1, 11):
        r = field.flat_shell_radius(i)
        offs = (rng.random((40, 3)) * 2 - 1) * r
        coords = (x0[None, :] + offs[:, :2]) % 1.0
        heights = np.abs(offs[:, 2])
        vals = speed_at_arrays(field, coords, heights)
        assert np.all(vals <= field.profile.beta(i - 1) + 1e-15)


def test_quadratic_field_values(cat_map, marked_point, quad_field):
    assert speed_at(quad_field, marked_point) == 0.0
    # ||xi|| = 0.25 lands in the pure square regime
    x0 = marked_point.base.as_array()
    offset = 0.25 * quad_field.chart_radius / 2.0
    q = fl.SuspensionPoint(fl.TorusPoint((x0[0] + offset, x0[1])), 0.0)
    assert speed_at(quad_field, q) == pytest.approx(0.0625, abs=1e-12)
    far = fl.SuspensionPoint(fl.TorusPoint((x0[0] + 0.3, x0[1])), 0.5)
    assert speed_at(quad_field, far) == 1.0
    rng = np.random.default_rng(2)
    vals = speed_at_arrays(quad_field, rng.random((400, 2)), rng.random(400))
    assert np.all((vals > 0.0) & (vals <= 1.0))


def test_constant_field():
    field = fl.constant_field(0.5)
    q = fl.SuspensionPoint(fl.TorusPoint((0.1, 0.1)), 0.3)
    assert speed_at(field, q) == 0.5
    with pytest.raises(ValueError):
        fl.constant_field(0.0)


def test_flat_family_is_pointwise_decreasing(cat_map, marked_point):
    lookup = lambda i: max(i, 2)
    rng = np.random.default_rng(3)
    coords = (marked_point.base.as_array()[None, :] + 0.05 * (rng.random((50, 2)) - 0.5)) % 1.0
    heights = 0.05 * rng.random(50)
    prev = None
    for idx in (1, 2, 3):
        field = flat_field_family(cat_map, marked_point, 0.2, lookup, idx, l_scale=1.0, l_ratio=0.1)
        vals = speed_at_arrays(field, coords, heights)
        if prev is not None:
            assert np.all(vals <= prev + 1e-18)
        prev = vals


def test_geometric_l_sequence_bounds():
    l = geometric_l_sequence(2.0, 0.1)
    assert 0.0 < l(1) < 1.0
    assert l(500) >= 1e-280
