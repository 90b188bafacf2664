"""Covering-count entropy estimates along sampled orbits of maps and flows.

R(delta, n, eps) counts the dynamical eps-balls of depth n needed to cover a
(1 - delta) core of a sampled cloud; the entropy estimate is the least-squares
slope of ln R against n per eps, extrapolated over the two smallest eps.
Exact minimal covers are NP-hard, so counts use a deterministic first-fit
scan: the next center is the first point not covered by earlier centers.
With one fixed scan order the same rule read as "keep points at distance
>= eps from kept ones" produces a maximal separated set, so the classic
spanning/separated sandwich holds cell by cell by construction.

Counts stop growing once balls hold only a handful of cloud points; cells
whose count exceeds a configurable fraction of the core are excluded from
slope fits (and the fraction is part of the grid spec, since experiments that
probe the stalling regime need the full window).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._kernels import map_bowen_kernel, susp_bowen_kernel
from .dynamics import BaseMap, SuspensionFlow, SuspensionPoint, TorusPoint, orbit_tensor
from .errors import DivergedMeasure, EmptyCloud, SaturatedGrid
from .speed import SpeedField
from .timechange import TimeChangedFlow, TrajectorySet, flow_trajectories

GREEDY_COVER = "greedy_cover"
MAX_SEPARATED = "max_separated"


def k_of_eps(eps: float) -> int:
    """Smallest integer strictly larger than 1/eps (height levels per roof)."""
    return int(math.floor(1.0 / eps)) + 1


def _cloud_coords(cloud) -> np.ndarray:
    if isinstance(cloud, np.ndarray):
        arr = np.atleast_2d(np.asarray(cloud, dtype=float))
    else:
        rows = [
            c.as_array() if isinstance(c, TorusPoint) else np.asarray(c, dtype=float)
            for c in cloud
        ]
        if not rows:
            raise EmptyCloud("empty sample cloud")
        arr = np.stack(rows)
    if arr.shape[0] == 0:
        raise EmptyCloud("empty sample cloud")
    return arr


def _susp_cloud(cloud) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(cloud, tuple) and len(cloud) == 2:
        coords = np.atleast_2d(np.asarray(cloud[0], dtype=float))
        heights = np.atleast_1d(np.asarray(cloud[1], dtype=float))
    else:
        pts = list(cloud)
        if not pts:
            raise EmptyCloud("empty sample cloud")
        coords = np.stack([p.base.as_array() for p in pts])
        heights = np.asarray([p.height for p in pts])
    if coords.shape[0] == 0:
        raise EmptyCloud("empty sample cloud")
    return coords, heights


def bowen_distance(base_map: BaseMap, x, y, n: int) -> float:
    """max over 0 <= i < n of the base distance between f^i x and f^i y."""
    if n < 1:
        raise ValueError("bowen_distance needs n >= 1")
    xa = x.as_array() if isinstance(x, TorusPoint) else np.asarray(x, dtype=float)
    ya = y.as_array() if isinstance(y, TorusPoint) else np.asarray(y, dtype=float)
    pair = np.stack([xa, ya])
    worst = 0.0
    for _ in range(n):
        d = np.abs(pair[0] - pair[1])
        d = np.minimum(d, 1.0 - d)
        worst = max(worst, float(np.max(d)))
        pair = base_map.step_batch(pair)
    return worst


class _Buckets:
    """Spatial prefilter: per center, the indices that could possibly lie in
    its dynamical ball.  Time-0 distance below eps already requires base
    proximity (one bucket block) or, for suspension points, heights on
    opposite sides of the roof; restricting candidates to that superset
    leaves every covering count unchanged."""

    def __init__(self, coords0: np.ndarray, eps: float, heights0: np.ndarray | None = None):
        self.n = coords0.shape[0]
        self.m = coords0.shape[1]
        self.nb = max(1, int(math.floor(1.0 / eps)))
        cells = np.minimum((coords0 * self.nb).astype(np.int64), self.nb - 1)
        self.flat = cells @ (self.nb ** np.arange(self.m - 1, -1, -1, dtype=np.int64))
        self.order = np.argsort(self.flat, kind="stable")
        self.sorted_flat = self.flat[self.order]
        self.cells = cells
        if heights0 is not None and self.nb > 1:
            self.low_edge = np.flatnonzero(heights0 < eps)
            self.high_edge = np.flatnonzero(heights0 > 1.0 - eps)
            self.heights0 = heights0
        else:
            self.low_edge = self.high_edge = None
            self.heights0 = None

    def _block(self, cell: np.ndarray) -> np.ndarray:
        if self.nb <= 2:
            return np.arange(self.n)
        offs = np.array([-1, 0, 1])
        mesh = np.meshgrid(*([offs] * self.m), indexing="ij")
        neigh = (cell[None, :] + np.stack([g.ravel() for g in mesh], axis=1)) % self.nb
        flats = neigh @ (self.nb ** np.arange(self.m - 1, -1, -1, dtype=np.int64))
        lo = np.searchsorted(self.sorted_flat, flats, side="left")
        hi = np.searchsorted(self.sorted_flat, flats, side="right")
        return np.concatenate([self.order[a:b] for a, b in zip(lo, hi)])

    def candidates(self, center: int) -> np.ndarray:
        out = self._block(self.cells[center])
        if self.heights0 is not None:
            s = self.heights0[center]
            extra = []
            if s > 1.0 - 1.0 / self.nb:
                extra.append(self.low_edge)
            if s < 1.0 / self.nb:
                extra.append(self.high_edge)
            if extra:
                out = np.unique(np.concatenate([out, *extra]))
        return out


def _first_fit(
    dist_fn, buckets: _Buckets, core_size: int, eps: float, cap: int, strict: bool
) -> tuple[int, bool]:
    """First-fit scan over the core prefix; returns (count, hit_cap)."""
    covered = np.zeros(core_size, dtype=bool)
    ptr = 0
    count = 0
    while ptr < core_size:
        if covered[ptr]:
            ptr += 1
            continue
        if count >= cap:
            return count, True
        cand = buckets.candidates(ptr)
        cand = cand[~covered[cand]]
        d = dist_fn(ptr, cand)
        hit = d < eps if not strict else d <= eps
        covered[cand[hit]] = True
        covered[ptr] = True
        count += 1
    return count, False


def _map_dist_fn(orbits: np.ndarray, n: int, eps: float):
    def dist(center: int, cand: np.ndarray) -> np.ndarray:
        cand = cand.astype(np.int64)
        return map_bowen_kernel(orbits, center, cand, n, eps, np.zeros(cand.size))

    return dist


def _flow_dist_fn(traj: TrajectorySet, n_samples: int, eps: float):
    def dist(center: int, cand: np.ndarray) -> np.ndarray:
        return susp_bowen_kernel(
            traj.base_orbits, traj.k_index, traj.heights,
            center, cand.astype(np.int64), n_samples, eps,
        )

    return dist


def katok_count(
    base_map: BaseMap,
    sample_cloud,
    delta: float,
    n: int,
    eps: float,
    method: str = GREEDY_COVER,
    *,
    count_cap: int | None = None,
) -> int:
    """Dynamical covering count of the (1 - delta) core of the cloud."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    coords = _cloud_coords(sample_cloud)
    core = max(1, int(math.ceil((1.0 - delta) * coords.shape[0])))
    orbits = orbit_tensor(base_map, coords, max(n, 1)).astype(np.float64)
    cap = core if count_cap is None else min(core, count_cap)
    buckets = _Buckets(coords[:core], eps)
    count, _ = _first_fit(
        _map_dist_fn(orbits, n, eps), buckets, core, eps, cap, method == MAX_SEPARATED
    )
    return count


@dataclass(frozen=True)
class EntropyGridSpec:
    """Grid parameters for an estimate run.

    ``fit_fraction`` bounds the counts used for slope fits (counts above it
    are cloud-limited); ``saturation_fraction`` is the hard flag at which a
    cell stops being computed at all.
    """

    n_values: tuple[int, ...]
    eps_values: tuple[float, ...]
    delta: float = 0.1
    method: str = GREEDY_COVER
    fit_fraction: float = 0.05
    saturation_fraction: float = 0.95
    min_fit_cells: int = 2
    fit_skip_initial: int = 1  # leading cells carry a covering-overhead transient

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if sorted(self.n_values) != list(self.n_values) or len(self.n_values) < 2:
            raise ValueError("n_values must be increasing with at least two entries")
        if sorted(self.eps_values, reverse=True) != list(self.eps_values):
            raise ValueError("eps_values must be decreasing")
        if self.method not in (GREEDY_COVER, MAX_SEPARATED):
            raise ValueError(f"unknown covering method {self.method!r}")
        if not 0.0 < self.fit_fraction <= 1.0:
            raise ValueError("fit_fraction must lie in (0, 1]")


@dataclass
class EntropyGrid:
    delta: float
    n_values: tuple[int, ...]
    eps_values: tuple[float, ...]
    method: str
    counts_raw: np.ndarray  # (n_eps, n_n) int64
    counts: np.ndarray      # monotone-regularized
    capped: np.ndarray      # bool mask: cell stopped at the compute cap
    core_size: int

    def to_csv_rows(self):
        for a, eps in enumerate(self.eps_values):
            for b, n in enumerate(self.n_values):
                yield (self.delta, n, eps, int(self.counts[a, b]), self.method)


def _regularize(counts_raw: np.ndarray) -> np.ndarray:
    # nondecreasing in n (columns) for each eps, nonincreasing in eps for each
    # n given eps_values sorted decreasing (rows accumulate downward)
    reg = np.maximum.accumulate(counts_raw, axis=1)
    reg = np.maximum.accumulate(reg, axis=0)
    return reg


@dataclass
class EntropyEstimate:
    slope_per_eps: dict[float, float | None]
    extrapolated: float
    diagnostics: dict = dc_field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "slope_per_eps": {f"{k:.17g}": v for k, v in self.slope_per_eps.items()},
            "extrapolated": self.extrapolated,
            "diagnostics": self.diagnostics,
        }


def _fill_grid(dist_builder, bucket_builder, core: int, spec: EntropyGridSpec) -> EntropyGrid:
    n_eps, n_n = len(spec.eps_values), len(spec.n_values)
    counts = np.zeros((n_eps, n_n), dtype=np.int64)
    capped = np.zeros((n_eps, n_n), dtype=bool)
    cap = max(2, int(math.ceil(spec.saturation_fraction * core)))
    compute_cap = max(2, min(cap, int(math.ceil(1.5 * spec.fit_fraction * core))))
    strict = spec.method == MAX_SEPARATED
    for a, eps in enumerate(spec.eps_values):
        buckets = bucket_builder(eps)
        stopped = False
        for b, n in enumerate(spec.n_values):
            if stopped:
                counts[a, b] = counts[a, b - 1]
                capped[a, b] = True
                continue
            dist_fn = dist_builder(n, eps)
            c, hit = _first_fit(dist_fn, buckets, core, eps, compute_cap, strict)
            counts[a, b] = c
            capped[a, b] = hit
            if hit:
                stopped = True  # counts are nondecreasing in n; deeper cells stay capped
    return EntropyGrid(
        spec.delta, tuple(spec.n_values), tuple(spec.eps_values), spec.method,
        counts, _regularize(counts), capped, core,
    )


def _fit_slopes(grid: EntropyGrid, spec: EntropyGridSpec) -> tuple[dict, dict]:
    fit_cap = max(2, int(math.ceil(spec.fit_fraction * grid.core_size)))
    slopes: dict[float, float | None] = {}
    windows: dict[float, list[int]] = {}
    for a, eps in enumerate(grid.eps_values):
        usable = [
            b
            for b in range(len(grid.n_values))
            if not grid.capped[a, b] and grid.counts_raw[a, b] <= fit_cap
        ]
        usable = usable[spec.fit_skip_initial:] if len(usable) > spec.fit_skip_initial + 1 else usable
        windows[eps] = [grid.n_values[b] for b in usable]
        if len(usable) < spec.min_fit_cells:
            slopes[eps] = None
            continue
        xs = np.asarray([grid.n_values[b] for b in usable], dtype=float)
        ys = np.log(grid.counts[a, usable].astype(float))
        slope = float(np.polyfit(xs, ys, 1)[0])
        slopes[eps] = max(slope, 0.0)
    return slopes, windows


def _finish_estimate(grid: EntropyGrid, spec: EntropyGridSpec, extra: dict) -> EntropyEstimate:
    slopes, windows = _fit_slopes(grid, spec)
    defined = [(eps, s) for eps, s in slopes.items() if s is not None]
    if not defined:
        raise SaturatedGrid("every grid cell is count-limited; enlarge the cloud or eps")
    smallest = sorted((eps for eps, _ in defined))[:2]
    extrapolated = max(slopes[e] for e in smallest)
    diagnostics = {
        "fit_windows": {f"{k:.17g}": v for k, v in windows.items()},
        "core_size": grid.core_size,
        "counts_raw": grid.counts_raw.tolist(),
        "counts_regularized": grid.counts.tolist(),
        "capped": grid.capped.tolist(),
        "n_values": list(grid.n_values),
        "eps_values": list(grid.eps_values),
        "delta": grid.delta,
        "method": grid.method,
        **extra,
    }
    return EntropyEstimate(slopes, extrapolated, diagnostics)


def entropy_estimate_map(base_map: BaseMap, cloud, spec: EntropyGridSpec) -> EntropyEstimate:
    """Slope-fit covering entropy of a discrete map from a Birkhoff cloud."""
    coords = _cloud_coords(cloud)
    core = max(1, int(math.ceil((1.0 - spec.delta) * coords.shape[0])))
    orbits = orbit_tensor(base_map, coords, max(spec.n_values)).astype(np.float64)

    def builder(n, eps):
        return _map_dist_fn(orbits, n, eps)

    grid = _fill_grid(builder, lambda eps: _Buckets(coords[:core], eps), core, spec)
    est = _finish_estimate(grid, spec, {"cloud_size": coords.shape[0], "kind": "map"})
    est.grid = grid  # attached for CSV emission
    return est


def entropy_estimate_flow(
    flow,
    cloud,
    spec: EntropyGridSpec,
    time_step: float,
    *,
    sub_step: float = 0.05,
) -> EntropyEstimate:
    """Covering entropy of a suspension or time-changed flow, with the
    continuous-time ball condition sampled every ``time_step`` units.

    Points whose trajectory passes within the singular tolerance of the
    stopped point are excluded from the cloud and counted in diagnostics.
    """
    if time_step > min(spec.eps_values) + 1e-12:
        raise ValueError("time_step must not exceed the smallest eps")
    coords, heights = _susp_cloud(cloud)
    horizon = float(max(spec.n_values))
    times = np.arange(0.0, horizon + 0.5 * time_step, time_step)
    traj = flow_trajectories(flow, coords, heights, times, sub_step=sub_step)
    keep = ~traj.dropped
    n_dropped = int(np.sum(traj.dropped))
    if n_dropped:
        traj = TrajectorySet(
            traj.sample_times,
            traj.base_orbits[:, keep, :],
            traj.k_index[:, keep],
            traj.heights[:, keep],
            np.zeros(int(keep.sum()), dtype=bool),
        )
    n_points = traj.n_points
    if n_points == 0:
        raise EmptyCloud("all cloud points were excluded as singular")
    core = max(1, int(math.ceil((1.0 - spec.delta) * n_points)))

    def builder(n, eps):
        n_samples = int(round(n / time_step)) + 1
        return _flow_dist_fn(traj, n_samples, eps)

    coords0 = traj.base_orbits[traj.k_index[0, :core].astype(int), np.arange(core)]
    heights0 = traj.heights[0, :core].astype(float)
    grid = _fill_grid(
        builder, lambda eps: _Buckets(coords0, eps, heights0), core, spec
    )
    est = _finish_estimate(
        grid,
        spec,
        {
            "cloud_size": n_points,
            "kind": "flow",
            "time_step": time_step,
            "dropped_singular_points": n_dropped,
        },
    )
    est.grid = grid
    return est


def suspension_box_count(
    base_map: BaseMap,
    cloud,
    delta: float,
    n: int,
    eps: float,
    *,
    count_cap: int | None = None,
) -> int:
    """Covering count by product boxes: a depth-n base ball crossed with a
    height window of width 2 eps (no wrap, mirroring the covering proof)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    coords, heights = _susp_cloud(cloud)
    core = max(1, int(math.ceil((1.0 - delta) * coords.shape[0])))
    orbits = orbit_tensor(base_map, coords, max(n, 1)).astype(np.float64)

    def dist(center: int, cand: np.ndarray) -> np.ndarray:
        cand = cand.astype(np.int64)
        gap = np.abs(heights[cand] - heights[center])
        return map_bowen_kernel(orbits, center, cand, n, eps, gap)

    cap = core if count_cap is None else min(core, count_cap)
    buckets = _Buckets(coords[:core], eps, heights[:core])
    count, _ = _first_fit(dist, buckets, core, eps, cap, False)
    return count


@dataclass(frozen=True)
class TotokiReport:
    lhs: float
    rhs: float
    ratio: float
    mass_estimate: float
    mass_drift: float
    phi_estimate: EntropyEstimate
    psi_estimate: EntropyEstimate


def totoki_check(
    flow_hat: TimeChangedFlow,
    cloud,
    spec_psi: EntropyGridSpec,
    time_step: float,
    *,
    spec_phi: EntropyGridSpec | None = None,
    time_step_phi: float | None = None,
    density_cloud=None,
    sub_step: float = 0.05,
) -> TotokiReport:
    """Entropy-times-mass balance between a time-changed flow and its base
    suspension: lhs = h(phi) * mass, rhs = h(psi) * 1 for a probability base.

    The invariant mass of the reparameterized flow is the Monte Carlo mean of
    the clock integrand; its stability is reported as the drift between the
    half-sample and full-sample estimates.
    """
    psi = flow_hat.clock.flow
    coords, heights = _susp_cloud(cloud)
    if density_cloud is None:
        dcoords, dheights = coords, heights
    else:
        dcoords, dheights = _susp_cloud(density_cloud)
    a_vals = flow_hat.clock.integrand.values(dcoords, dheights)
    if not np.all(np.isfinite(a_vals)):
        raise DivergedMeasure("clock integrand unbounded on the density samples")
    mass = float(np.mean(a_vals))
    half = float(np.mean(a_vals[: max(1, a_vals.size // 2)]))
    drift = abs(mass - half) / mass
    if mass > 1e12:
        raise DivergedMeasure(f"invariant mass estimate {mass:g} exceeds the cap")
    psi_est = entropy_estimate_flow(psi, (coords, heights), spec_psi, time_step, sub_step=sub_step)
    spec_phi = spec_phi or spec_psi
    ts_phi = time_step_phi or time_step
    phi_est = entropy_estimate_flow(
        flow_hat, (coords, heights), spec_phi, ts_phi, sub_step=sub_step
    )
    lhs = phi_est.extrapolated * mass
    rhs = psi_est.extrapolated
    ratio = lhs / rhs if rhs > 0 else math.inf
    return TotokiReport(lhs, rhs, ratio, mass, drift, phi_est, psi_est)
