"""Speed fields on the suspension that vanish to high order at one marked point.

The flat profile is a weighted series of shifted exp(-1/t) mollifiers

    eta(t) = sum_{i>=1} 2^(-i-1) beta_{i-1} h(t - 1/(i+1)),

zero on [-1, 0], blended smoothly to the constant 1 on [1, 2].  Every
derivative of eta vanishes at 0, and on the shell t < 1/(k+2) the value is
bounded by beta_k h(1) / 2^k.  A speed field composes such a profile with the
radial coordinate of a chart around the marked point p, so the induced flow
stalls super-polynomially near p; the quadratic variant instead grows like
the squared chart radius, slowly enough to stall but fast enough to keep the
reciprocal integrable in dimension >= 3.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import BaseMap, SuspensionPoint, apply_base_batch
from .numerics import (
    Jet,
    jet_affine_rescale,
    mollifier_exp,
    mollifier_exp_derivative,
    mollifier_jet,
    smoothstep_flat,
    smoothstep_flat_jet,
)

FLAT_AT_P = "flat_at_p"
QUADRATIC_AT_P = "quadratic_at_p"
CONSTANT = "constant"

_SERIES_EDGE = 0.5  # series region ends where the blend to 1 begins


def mollifier_h(t):
    """The basic flat mollifier: exp(-1/t) for t > 0 and 0 for t <= 0."""
    return mollifier_exp(t)


def mollifier_h_derivative(t: float, k: int) -> float:
    """Exact k-th derivative of the mollifier (k <= 4)."""
    return mollifier_exp_derivative(float(t), k)


@dataclass(frozen=True)
class FlatProfile:
    """Coefficients of the mollifier series.

    ``betas[0]`` is the leading bound 1; ``betas[j]`` for j >= 1 is the shell
    bound beta_{j-1} entering series term j.  ``alphas[i] = 1/(i+1)`` are the
    shift radii (``alphas[0] = 1`` is the profile domain edge).
    """

    betas: tuple[float, ...]
    alphas: tuple[float, ...]
    truncation_tol: float = 1e-14
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        b = self.betas
        if len(b) < 2 or b[0] != 1.0:
            raise ValueError("betas must start at the leading bound 1")
        if any(not 0.0 < b[j + 1] < b[j] for j in range(len(b) - 1)):
            raise ValueError("betas must be strictly decreasing and positive")
        expected = tuple(1.0 / (i + 1) for i in range(len(b)))
        if self.alphas != expected:
            raise ValueError("alphas must be the fixed sequence 1/(i+1)")
        if not self.truncation_tol > 0.0:
            raise ValueError("truncation_tol must be positive")

    @property
    def n_terms(self) -> int:
        return len(self.betas) - 1

    def beta(self, k: int) -> float:
        """Shell bound beta_k, k >= -1."""
        return self.betas[k + 1]

    def to_json_dict(self) -> dict:
        return {
            "betas": list(self.betas),
            "alphas": list(self.alphas),
            "truncation_tol": self.truncation_tol,
            "provenance": dict(self.provenance),
        }


def profile_from_betas(betas, truncation_tol: float = 1e-14, provenance=None) -> FlatProfile:
    betas = tuple(float(b) for b in betas)
    alphas = tuple(1.0 / (i + 1) for i in range(len(betas)))
    return FlatProfile(betas, alphas, truncation_tol, dict(provenance or {}))


def default_flat_profile(n_shells: int = 64) -> FlatProfile:
    """A generic strictly decreasing profile for tests: beta_k = 2^-(k+1)."""
    return profile_from_betas(
        [1.0] + [2.0 ** -(k + 1) for k in range(n_shells)],
        provenance={"builder": "default_flat_profile"},
    )


def _as_lookup(seq):
    if callable(seq):
        return seq
    return lambda i: seq[i]


def build_flat_profile(
    L_sequence,
    l_sequence,
    i0: int,
    *,
    n_shells: int = 64,
    truncation_tol: float = 1e-14,
) -> FlatProfile:
    """Shell bounds from a recurrence profile and a nesting-scale sequence.

    beta_{k-1} = (l(i0+k) / (i0+k)) * delta(i0+k) with delta(i) = 1/max(L(i), 1),
    forced strictly decreasing by a running-minimum guard; any clamped indices
    are recorded in the profile provenance.
    """
    if n_shells < 1:
        raise ValueError("need at least one shell")
    if i0 < 0:
        raise ValueError("i0 must be nonnegative")
    L = _as_lookup(L_sequence)
    small = _as_lookup(l_sequence)
    betas = [1.0]
    used_L, used_l, clamped = [], [], []
    for k in range(1, n_shells + 1):
        idx = i0 + k
        L_val = int(L(idx))
        l_val = float(small(idx))
        if L_val < 0:
            raise ValueError(f"L({idx}) must be a nonnegative integer")
        if not 0.0 < l_val < 1.0:
            raise ValueError(f"l({idx}) must lie in (0, 1)")
        used_L.append(L_val)
        used_l.append(l_val)
        delta = 1.0 / max(L_val, 1)
        raw = (l_val / idx) * delta
        guard = betas[-1] * (1.0 - 1e-9)
        if raw >= guard:
            clamped.append(k - 1)
            raw = guard
        if raw <= 0.0:
            raise ValueError("shell bound underflowed to zero; shorten the profile")
        betas.append(raw)
    return profile_from_betas(
        betas,
        truncation_tol,
        provenance={
            "builder": "build_flat_profile",
            "i0": i0,
            "L_values": used_L,
            "l_values": used_l,
            "clamped_indices": clamped,
        },
    )


def geometric_l_sequence(scale: float, ratio: float, floor: float = 1e-280):
    """Nesting scales l_j = scale * ratio^j, clamped away from underflow.

    A geometric choice makes successive profile indices shrink every shell
    bound by the same factor, so return times escalate uniformly across a
    field family; the choice is recorded in run manifests.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")

    def l_of(j: int) -> float:
        v = scale * ratio**j
        return min(max(v, floor), 1.0 - 1e-12)

    return l_of


def flat_field_family(
    base_map: BaseMap,
    p: SuspensionPoint,
    chart_radius: float,
    L_sequence,
    index: int,
    *,
    l_scale: float = 1.0,
    l_ratio: float = 0.05,
    n_shells: int = 64,
) -> SpeedField:
    """The index-th member of an escalating flat family: shell bounds from the
    recurrence profile with nesting scales l_j = l_scale * l_ratio^j and the
    start offset i0 = index, so every bound shrinks by ~l_ratio per index."""
    profile = build_flat_profile(
        L_sequence, geometric_l_sequence(l_scale, l_ratio), index, n_shells=n_shells
    )
    return flat_field(base_map, p, chart_radius, profile)


def _series_sum(profile: FlatProfile, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    tol = profile.truncation_tol
    h_max = mollifier_exp(2.0)
    for i in range(1, profile.n_terms + 1):
        weight = 2.0 ** (-i - 1) * profile.betas[i]
        if weight * h_max * 2.0 < tol:
            break  # geometric tail below the certified truncation tolerance
        arg = t - profile.alphas[i]
        if not np.any(arg > 0.0):
            continue
        out += weight * mollifier_exp(arg)
    return out


def eta_eval(profile: FlatProfile, t):
    """The profile value on [-1, 2]: series below 1/2, blend to 1 above."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < -1.0 - 1e-12) or np.any(arr > 2.0 + 1e-12):
        raise ValueError("profile argument outside [-1, 2]")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = _series_sum(profile, arr)
    w = smoothstep_flat(2.0 * arr - 1.0)
    out = (1.0 - w) * out + w
    return float(out[0]) if scalar else out


def eta_derivative(profile: FlatProfile, t: float, k: int) -> float:
    """k-th derivative (k <= 4) by exact term-wise differentiation of the
    truncated series and the blend; higher orders are finite-difference work."""
    if not 1 <= int(k) <= 4:
        raise ValueError("series derivatives implemented for orders 1..4 only")
    t = float(t)
    if not -1.0 - 1e-12 <= t <= 2.0 + 1e-12:
        raise ValueError("profile argument outside [-1, 2]")
    if t <= 0.0:
        return 0.0
    tol = profile.truncation_tol
    h_max = mollifier_exp(2.0)
    series = Jet.constant(0.0)
    for i in range(1, profile.n_terms + 1):
        weight = 2.0 ** (-i - 1) * profile.betas[i]
        if weight * h_max * 2.0 < tol:
            break
        arg = t - profile.alphas[i]
        if arg <= 0.0:
            continue
        series = series + weight * mollifier_jet(arg)
    blend = jet_affine_rescale(smoothstep_flat_jet(2.0 * t - 1.0), 2.0)
    total = (Jet.constant(1.0) - blend) * series + blend
    return total.derivative(int(k))


@dataclass(frozen=True)
class SpeedField:
    """A scalar field on the suspension in [0, 1], equal to 1 away from ``p``.

    Flat and quadratic kinds vanish exactly at ``p`` and compose a radial
    profile with Euclidean chart coordinates scaled so the chart ball of
    radius ``chart_radius`` maps onto the ball of radius 2.
    """

    kind: str
    base_map: BaseMap | None = None
    p: SuspensionPoint | None = None
    chart_radius: float = 0.2
    profile: FlatProfile | None = None
    constant_value: float = 1.0

    def __post_init__(self):
        if self.kind == CONSTANT:
            if not 0.0 < self.constant_value <= 1.0:
                raise ValueError("constant speed must lie in (0, 1]")
            return
        if self.kind not in (FLAT_AT_P, QUADRATIC_AT_P):
            raise ValueError(f"unknown speed field kind: {self.kind!r}")
        if self.base_map is None or self.p is None:
            raise ValueError("flat/quadratic fields need a base map and a marked point")
        if not 0.0 < self.chart_radius < 0.5:
            raise ValueError("chart radius must lie in (0, 1/2)")
        if self.kind == FLAT_AT_P and self.profile is None:
            raise ValueError("flat field needs a profile")

    @property
    def dim(self) -> int:
        return self.base_map.dim + 1 if self.base_map is not None else 0

    def chart_norms(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        """Scaled chart radius ||xi(q)||: Euclidean norm of the local offset
        from p times 2/chart_radius.  Values >= 1 mean "outside the bump"."""
        coords = np.asarray(coords, dtype=float)
        heights = np.asarray(heights, dtype=float)
        n = heights.shape[0]
        norms = np.full(n, 4.0)  # sentinel: far outside
        x0 = self.p.base.as_array()
        quick = np.minimum(heights, 1.0 - heights) < 0.5 * self.chart_radius
        low = quick & (heights <= 0.5)
        high = quick & (heights > 0.5)
        if np.any(low):
            d = coords[low] - x0
            d -= np.floor(d + 0.5)
            norms[low] = np.sqrt(np.sum(d * d, axis=1) + heights[low] ** 2)
        if np.any(high):
            fx = apply_base_batch(self.base_map, coords[high])
            d = fx - x0
            d -= np.floor(d + 0.5)
            norms[high] = np.sqrt(np.sum(d * d, axis=1) + (heights[high] - 1.0) ** 2)
        return norms * (2.0 / self.chart_radius)

    def flat_shell_radius(self, i: int) -> float:
        """Sup-metric radius around p inside which the flat value is <= beta_{i-1}."""
        if self.kind != FLAT_AT_P:
            raise ValueError("shell radii are a flat-field notion")
        alpha_i = 1.0 / (i + 1)
        return self.chart_radius * alpha_i / (2.0 * math.sqrt(self.dim))


def constant_field(value: float) -> SpeedField:
    return SpeedField(CONSTANT, constant_value=value)


def flat_field(base_map: BaseMap, p: SuspensionPoint, chart_radius: float, profile: FlatProfile) -> SpeedField:
    return SpeedField(FLAT_AT_P, base_map, p, chart_radius, profile)


def quadratic_field(base_map: BaseMap, p: SuspensionPoint, chart_radius: float = 0.2) -> SpeedField:
    return SpeedField(QUADRATIC_AT_P, base_map, p, chart_radius)


def speed_at_arrays(field: SpeedField, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Vectorized field evaluation over (N, m) base coords and (N,) heights."""
    heights = np.asarray(heights, dtype=float)
    if field.kind == CONSTANT:
        return np.full(heights.shape[0], field.constant_value)
    norms = field.chart_norms(coords, heights)
    out = np.ones(heights.shape[0])
    inside = norms < 1.0
    if not np.any(inside):
        return out
    r = norms[inside]
    if field.kind == FLAT_AT_P:
        out[inside] = eta_eval(field.profile, r)
    else:
        w = smoothstep_flat(2.0 * r - 1.0)
        out[inside] = (1.0 - w) * r * r + w
    return out


def speed_at(field: SpeedField, q: SuspensionPoint) -> float:
    """Field value at a single suspension point."""
    return float(
        speed_at_arrays(field, q.base.as_array()[None, :], np.asarray([q.height]))[0]
    )


def profile_to_json(profile: FlatProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
