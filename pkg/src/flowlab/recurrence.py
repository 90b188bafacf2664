"""Uniform recurrence constants and the ball-measure lower bound they imply.

For a minimal map, every point enters every epsilon-ball within L(epsilon)
iterates; along an ergodic orbit this forces every epsilon-ball to carry
measure at least 1/L(epsilon).  Rotations admit a certified computation
(translation invariance reduces the two-point quantifier to one difference
grid, cross-checked in one dimension against the orbit-gap oracle); for
non-minimal maps only an empirical, uncertified profile along a typical orbit
is available, and the search may correctly fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ROTATION, BaseMap, TorusPoint
from .errors import NotFoundWithinHorizon, UncertifiedReport
from .numerics import circle_dist


@dataclass(frozen=True)
class RecurrenceReport:
    epsilon: float
    L: int
    witness_grid_resolution: float
    is_certified: bool


def _grid_1d(resolution: float, offset: float) -> np.ndarray:
    n = max(1, int(np.ceil(1.0 / resolution)))
    return (np.arange(n) / n + offset) % 1.0


def _grid_torus(dim: int, resolution: float, offset: float = 0.0) -> np.ndarray:
    axes = [_grid_1d(resolution, offset)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def rotation_gap_L(angles, epsilon: float, horizon: int = 10**6) -> int:
    """Brute-force oracle for 1-d rotations: smallest L with max gap of
    {k*theta mod 1 : k <= L} below 2*epsilon."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.size != 1:
        raise ValueError("the gap oracle is one-dimensional")
    theta = float(angles[0]) % 1.0
    pts = [0.0]
    for L in range(0, horizon + 1):
        if L > 0:
            pts.append((L * theta) % 1.0)
        arr = np.sort(np.asarray(pts))
        gaps = np.diff(np.concatenate([arr, [arr[0] + 1.0]]))
        if float(np.max(gaps)) < 2.0 * epsilon:
            return L
    raise NotFoundWithinHorizon(f"no gap below {2 * epsilon} within {horizon} iterates")


def recurrence_constant(
    base_map: BaseMap,
    epsilon: float,
    grid_resolution: float | None = None,
    *,
    horizon: int = 10**6,
    grid_offset: float = 0.0,
) -> RecurrenceReport:
    """Smallest L such that every grid pair (x, y) has f^l(y) in B(x, 3eps/4)
    for some l <= L.  The shrunk radius plus the grid slack certifies the full
    two-point statement when the map is an isometry; other maps get an
    uncertified report or a documented failure."""
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    resolution = epsilon / 4.0 if grid_resolution is None else float(grid_resolution)
    if epsilon >= 0.5:
        # a closed sup-metric ball of radius >= 1/2 is the whole torus
        return RecurrenceReport(epsilon, 0, resolution, True)
    radius = 0.75 * epsilon

    if base_map.kind == ROTATION:
        if base_map.dim == 1:
            # translation invariance makes the gap criterion exact; the grid
            # search below then serves as an independent validity check
            L = rotation_gap_L(base_map.angles, epsilon, horizon)
            steps = np.arange(L + 1, dtype=float)
            orbit = (steps[:, None] * np.asarray(base_map.angles)[None, :]) % 1.0
            diffs = _grid_torus(1, resolution, grid_offset)
            gaps = np.min(
                np.max(circle_dist(orbit[:, None, :], diffs[None, :, :]), axis=2), axis=0
            )
            if np.any(gaps >= epsilon):
                raise AssertionError("gap-oracle L fails the grid validity check")
            return RecurrenceReport(epsilon, L, resolution, True)
        diffs = _grid_torus(base_map.dim, resolution, grid_offset)
        unmet = np.ones(diffs.shape[0], dtype=bool)
        pos = np.zeros(base_map.dim)
        L = 0
        for l in range(horizon + 1):
            if l > 0:
                pos = (pos + np.asarray(base_map.angles)) % 1.0
            idx = np.flatnonzero(unmet)
            hit = np.max(circle_dist(pos[None, :], diffs[idx]), axis=1) <= radius
            if np.any(hit):
                unmet[idx[hit]] = False
                L = l
            if not unmet.any():
                return RecurrenceReport(epsilon, L, resolution, True)
        raise NotFoundWithinHorizon(
            f"rotation recurrence not established within {horizon} iterates"
        )

    # general map: two-point grid search with exact-periodicity bailout
    grid = _grid_torus(base_map.dim, resolution, grid_offset)
    n = grid.shape[0]
    pos = grid.copy()
    pending = np.ones((n, n), dtype=bool)  # pending[i, j]: y_j has not hit B(x_i, .)
    periodic = np.zeros(n, dtype=bool)
    L = 0
    for l in range(horizon + 1):
        if l > 0:
            pos = base_map.step_batch(pos)
            periodic |= np.max(np.abs(pos - grid), axis=1) < 1e-12
        d = np.max(circle_dist(grid[:, None, :], pos[None, :, :]), axis=2)
        newly = pending & (d <= radius)
        if np.any(newly):
            L = l
            pending &= ~newly
        if not pending.any():
            return RecurrenceReport(epsilon, L, resolution, False)
        if np.any(pending[:, periodic]):
            raise NotFoundWithinHorizon(
                "a grid point is exactly periodic and misses some target ball; "
                "no uniform recurrence constant exists"
            )
    raise NotFoundWithinHorizon(f"recurrence not established within {horizon} iterates")


def empirical_recurrence(
    base_map: BaseMap,
    epsilon: float,
    *,
    orbit_length: int = 200_000,
    rng: np.random.Generator,
    grid_resolution: float | None = None,
) -> RecurrenceReport:
    """Uncertified recurrence constant along one typical orbit: the longest
    wait before the orbit enters any grid-centered ball of radius 3eps/4."""
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    resolution = epsilon / 2.0 if grid_resolution is None else float(grid_resolution)
    if epsilon >= 0.5:
        return RecurrenceReport(epsilon, 0, resolution, False)
    radius = 0.75 * epsilon
    orbit = np.empty((orbit_length, base_map.dim))
    orbit[0] = rng.random(base_map.dim)
    for i in range(1, orbit_length):
        orbit[i] = base_map.step_batch(orbit[i - 1][None, :])[0]
    centers = _grid_torus(base_map.dim, resolution, offset=0.5 * resolution)
    worst = 0
    for c in centers:
        hits = np.flatnonzero(np.max(circle_dist(orbit, c[None, :]), axis=1) <= radius)
        if hits.size == 0:
            raise NotFoundWithinHorizon(
                f"orbit of length {orbit_length} never entered a radius-{radius} ball"
            )
        worst = max(worst, int(hits[0]))
        if hits.size > 1:
            worst = max(worst, int(np.max(np.diff(hits))))
    return RecurrenceReport(epsilon, worst, resolution, False)


def recurrence_profile(
    base_map: BaseMap,
    indices,
    *,
    rng: np.random.Generator | None = None,
    empirical: bool | None = None,
    orbit_length: int = 200_000,
    empirical_index_cap: int = 16,
) -> dict[int, int]:
    """L(1/i) for each index i: certified for rotations, empirical otherwise.

    Beyond ``empirical_index_cap`` the last measured value is reused (the
    constant extension keeps delta(i) = 1/L nonincreasing; callers record the
    cap in their run manifest)."""
    use_empirical = base_map.kind != ROTATION if empirical is None else empirical
    out: dict[int, int] = {}
    last = 1
    for i in sorted(int(j) for j in indices):
        eps = 1.0 / i
        if use_empirical:
            if rng is None:
                raise ValueError("empirical recurrence profiles need an rng")
            if i <= empirical_index_cap:
                rep = empirical_recurrence(base_map, eps, orbit_length=orbit_length, rng=rng)
                last = max(rep.L, 1)
            out[i] = last
        else:
            rep = recurrence_constant(base_map, eps)
            out[i] = max(rep.L, 1)
    return out


@dataclass(frozen=True)
class BallMeasureCheck:
    passed: bool
    min_margin: float
    bound: float
    frequencies: tuple[float, ...]


def ball_measure_bound_check(
    base_map: BaseMap,
    epsilon: float,
    report: RecurrenceReport,
    centers,
    *,
    orbit_length: int = 10**6,
    rng: np.random.Generator,
    statistical_margin: float = 0.02,
) -> BallMeasureCheck:
    """Birkhoff frequency of each sampled ball against the 1/L lower bound."""
    if not report.is_certified:
        raise UncertifiedReport("ball-measure bound requires a certified recurrence report")
    bound = 1.0 / max(report.L, 1)
    start = rng.random(base_map.dim)
    if base_map.kind == ROTATION:
        steps = np.arange(orbit_length, dtype=float)
        orbit = (start[None, :] + steps[:, None] * np.asarray(base_map.angles)[None, :]) % 1.0
    else:
        orbit = np.empty((orbit_length, base_map.dim))
        orbit[0] = start
        for i in range(1, orbit_length):
            orbit[i] = base_map.step_batch(orbit[i - 1][None, :])[0]
    freqs = []
    for c in centers:
        ca = c.as_array() if isinstance(c, TorusPoint) else np.asarray(c, dtype=float)
        inside = np.max(circle_dist(orbit, ca[None, :]), axis=1) < epsilon
        freqs.append(float(np.mean(inside)))
    margin = min(f - bound for f in freqs)
    passed = margin >= -statistical_margin * bound
    return BallMeasureCheck(passed, margin, bound, tuple(freqs))
