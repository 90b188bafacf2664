"""Additive clocks along the suspension flow and the flows they reparameterize.

A clock integrates a nonnegative observable a along the unit-speed flow,

    theta(t, q) = integral_0^t a(psi_s q) ds,

and the reparameterized flow runs the same orbits at speed 1/a:
phi_t q = psi_{tau(t, q)} q with tau(t, q) = sup{s : theta(s, q) <= t}.  A
speed field alpha corresponds to the integrand a = 1/alpha, so the flow of
the rescaled generator alpha X is the time change of psi by the clock of
1/alpha.  The return time gamma(x) is the phi-time needed to climb one roof,
i.e. the fiber integral of 1/alpha; its divergence is reported as a value,
not an error, since it encodes an infinite return time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dynamics import (
    BaseMap,
    SuspensionFlow,
    SuspensionPoint,
    TorusPoint,
    apply_base,
    dist_base,
    dist_susp,
    orbit_tensor,
    suspension_advance,
)
from .errors import (
    DivergedDenominator,
    EmptySamples,
    IntegrandUnbounded,
    NotInvertible,
    WitnessNotFound,
)
from .numerics import adaptive_simpson, map_ordered_batches
from .speed import SpeedField, speed_at_arrays

SINGULAR_TOLERANCE = 1e-9  # orbits passing this close to p count as singular


# ---------------------------------------------------------------------------
# clock integrands


@dataclass(frozen=True)
class ConstantIntegrand:
    value: float

    @property
    def singular_point(self) -> SuspensionPoint | None:
        return None

    def min_value(self) -> float:
        return self.value

    def values(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(heights).shape[0], self.value)

    def speed_values(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(heights).shape[0], 1.0 / self.value)


@dataclass(frozen=True)
class ReciprocalSpeedIntegrand:
    """a = 1/alpha for a speed field alpha: the clock of the alpha-rescaled flow."""

    field: SpeedField

    @property
    def singular_point(self) -> SuspensionPoint | None:
        return self.field.p

    def min_value(self) -> float:
        return 1.0  # alpha <= 1 everywhere

    def values(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        speeds = speed_at_arrays(self.field, coords, heights)
        out = np.full_like(speeds, np.inf)
        pos = speeds > 0.0
        out[pos] = 1.0 / speeds[pos]
        return out

    def speed_values(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        return speed_at_arrays(self.field, coords, heights)


@dataclass(frozen=True)
class SpeedIntegrand:
    """a = alpha itself; vanishes near the marked point, so its clock can plateau."""

    field: SpeedField

    @property
    def singular_point(self) -> SuspensionPoint | None:
        return self.field.p

    def min_value(self) -> float:
        return 0.0

    def values(self, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
        return speed_at_arrays(self.field, coords, heights)

    def speed_values(self, coords, heights):
        raise ValueError("a vanishing integrand gives an unbounded flow speed")


@dataclass(frozen=True)
class AdditiveClock:
    flow: SuspensionFlow
    integrand: object
    quad_step: float = 0.25
    quad_tol: float = 1e-10
    integrand_cap: float = 1e12


def constant_clock(flow: SuspensionFlow, value: float, **kw) -> AdditiveClock:
    if not value > 0.0:
        raise ValueError("constant clock integrand must be positive")
    return AdditiveClock(flow, ConstantIntegrand(float(value)), **kw)


def clock_from_speed_field(flow: SuspensionFlow, field: SpeedField, **kw) -> AdditiveClock:
    return AdditiveClock(flow, ReciprocalSpeedIntegrand(field), **kw)


@dataclass(frozen=True)
class TimeChangedFlow:
    clock: AdditiveClock
    inversion_tol: float = 1e-9
    inversion_horizon: float = 1e6


def time_changed_flow(flow: SuspensionFlow, field: SpeedField, **kw) -> TimeChangedFlow:
    """The flow of the rescaled generator: same orbits as psi, local speed alpha."""
    return TimeChangedFlow(clock_from_speed_field(flow, field), **kw)


# ---------------------------------------------------------------------------
# fiber evaluation along a single orbit


class _FiberEval:
    """Evaluate an integrand at psi_u(q) for arbitrary arrays of u >= 0."""

    def __init__(self, base_map: BaseMap, q: SuspensionPoint, integrand):
        self.base_map = base_map
        self.s0 = q.height
        self.integrand = integrand
        self._orbit = q.base.as_array()[None, :].copy()

    def _ensure_depth(self, k_max: int) -> None:
        while self._orbit.shape[0] <= k_max:
            grow = self.base_map.step_batch(self._orbit[-1][None, :])
            self._orbit = np.concatenate([self._orbit, grow], axis=0)

    def base_at(self, k: int) -> np.ndarray:
        self._ensure_depth(k)
        return self._orbit[k]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        s = self.s0 + u
        k = np.floor(s).astype(int)
        k = np.maximum(k, 0)
        self._ensure_depth(int(k.max(initial=0)))
        bases = self._orbit[k]
        heights = s - k
        return self.integrand.values(bases, heights)


def _ladder(center: float, lo: float, hi: float, scale: float) -> list[float]:
    pts = []
    for j in range(46):
        step = scale * 2.0**-j
        for cand in (center - step, center + step):
            if lo < cand < hi:
                pts.append(cand)
    return pts


def _span_breakpoints(fib: _FiberEval, u_lo: float, u_hi: float) -> list[float]:
    """Roof crossings inside the span, plus refinement ladders around crossings
    whose base point lands inside the chart of a singular integrand."""
    pts: list[float] = []
    k_first = math.ceil(fib.s0 + u_lo - 1e-12)
    k_last = math.floor(fib.s0 + u_hi + 1e-12)
    p = getattr(fib.integrand, "singular_point", None)
    radius = getattr(fib.integrand, "field", None)
    chart_radius = radius.chart_radius if radius is not None else 0.0
    for k in range(max(k_first, 0), k_last + 1):
        u_c = k - fib.s0
        if u_lo < u_c < u_hi:
            pts.append(u_c)
        if p is not None:
            base = fib.base_at(max(k, 0))
            if dist_base(base, p.base) < chart_radius:
                pts.extend(_ladder(u_c, u_lo, u_hi, chart_radius))
    return pts


def _integrate_span(clock: AdditiveClock, fib: _FiberEval, u_lo: float, u_hi: float, tol: float):
    res = adaptive_simpson(
        fib,
        u_lo,
        u_hi,
        tol,
        value_cap=clock.integrand_cap,
        breakpoints=_span_breakpoints(fib, u_lo, u_hi),
    )
    if res.diverged:
        raise IntegrandUnbounded(
            f"clock integrand exceeded the cap {clock.integrand_cap:g} on "
            f"[{u_lo:g}, {u_hi:g}]"
        )
    return res.value


def theta(clock: AdditiveClock, q: SuspensionPoint, t: float) -> float:
    """Accumulated clock time over psi-time t, by adaptive quadrature."""
    t = float(t)
    if t < 0.0:
        raise ValueError("theta is implemented for nonnegative times")
    if t == 0.0:
        return 0.0
    fib = _FiberEval(clock.flow.base_map, q, clock.integrand)
    return _integrate_span(clock, fib, 0.0, t, clock.quad_tol * (1.0 + t))


def tau(flow: TimeChangedFlow, q: SuspensionPoint, t: float) -> float:
    """Inverse clock: the psi-time s with theta(s, q) = t, by monotone
    bracketing along the orbit and bisection inside the bracketing span."""
    t = float(t)
    if t < 0.0:
        raise ValueError("tau is implemented for nonnegative times")
    if t == 0.0:
        return 0.0
    clock = flow.clock
    fib = _FiberEval(clock.flow.base_map, q, clock.integrand)
    tol_time = clock.quad_tol * (1.0 + t)
    u_done = 0.0
    theta_done = 0.0
    stride = clock.quad_step
    while u_done < flow.inversion_horizon:
        u_next = min(u_done + stride, flow.inversion_horizon)
        seg = _integrate_span(clock, fib, u_done, u_next, tol_time)
        if theta_done + seg >= t:
            lo, hi = u_done, u_next
            for _ in range(200):
                if hi - lo <= flow.inversion_tol:
                    break
                mid = 0.5 * (lo + hi)
                val = theta_done + _integrate_span(clock, fib, u_done, mid, tol_time)
                if val < t:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        theta_done += seg
        span = u_next - u_done
        u_done = u_next
        # project the remaining walk from the local rate: long strides through
        # slow stretches, short ones when the target is near
        rate = seg / span if span > 0 else 0.0
        if rate > 0.0:
            required = (t - theta_done) / rate
            stride = min(64.0, max(clock.quad_step, required / 8.0))
        else:
            stride = 64.0
    raise NotInvertible(
        f"clock reached only {theta_done:g} < {t:g} within psi-horizon "
        f"{flow.inversion_horizon:g}"
    )


def phi_advance(flow: TimeChangedFlow, q: SuspensionPoint, t: float) -> SuspensionPoint:
    """Advance the time-changed flow: psi_{tau(t, q)} q; the singular point is fixed."""
    p = getattr(flow.clock.integrand, "singular_point", None)
    if p is not None and dist_susp(flow.clock.flow, q, p) < SINGULAR_TOLERANCE:
        return q
    return suspension_advance(flow.clock.flow, q, tau(flow, q, t))


# ---------------------------------------------------------------------------
# return times and measure transport


@dataclass(frozen=True)
class ReturnTimeReport:
    value: float | None
    diverged: bool
    quadrature_cap: float = 1e12


def _as_coords(samples, dim_hint=None) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(np.asarray(samples, dtype=float))
    rows = [s.as_array() if isinstance(s, TorusPoint) else np.asarray(s, float) for s in samples]
    if not rows:
        return np.empty((0, dim_hint or 1))
    return np.stack(rows)


def gamma(
    field: SpeedField,
    x,
    *,
    quadrature_cap: float = 1e12,
    quad_tol: float = 1e-9,
) -> ReturnTimeReport:
    """phi-time to climb one roof from (x, 0): the fiber integral of 1/alpha."""
    if field.kind == "constant":
        return ReturnTimeReport(1.0 / field.constant_value, False, quadrature_cap)
    xp = x if isinstance(x, TorusPoint) else TorusPoint(tuple(np.asarray(x, float)))
    x0 = field.p.base
    fx = apply_base(field.base_map, xp, 1)
    if dist_base(xp, x0) < 1e-12 or dist_base(fx, x0) < 1e-12:
        return ReturnTimeReport(None, True, quadrature_cap)
    q = SuspensionPoint(xp, 0.0)
    fib = _FiberEval(field.base_map, q, ReciprocalSpeedIntegrand(field))
    pts: list[float] = []
    if dist_base(xp, x0) < field.chart_radius:
        pts.extend(_ladder(0.0, 0.0, 1.0, field.chart_radius))
    if dist_base(fx, x0) < field.chart_radius:
        pts.extend(_ladder(1.0, 0.0, 1.0, field.chart_radius))
    res = adaptive_simpson(fib, 0.0, 1.0, quad_tol, value_cap=quadrature_cap, breakpoints=pts)
    if res.diverged:
        return ReturnTimeReport(None, True, quadrature_cap)
    return ReturnTimeReport(res.value, False, quadrature_cap)


@dataclass(frozen=True)
class ExpectationReport:
    value: float | None
    diverged: bool
    trace: tuple[float, ...] = dc_field(repr=False, default=())


def expected_gamma(
    field: SpeedField,
    samples,
    *,
    quadrature_cap: float = 1e12,
    quad_tol: float = 1e-9,
    workers: int = 1,
) -> ExpectationReport:
    """Monte Carlo mean of gamma over base samples; divergence of any sample
    or of the running mean is reported as Diverged."""
    coords = _as_coords(samples)
    if coords.shape[0] == 0:
        raise EmptySamples("expected_gamma needs at least one sample")

    def batch(lo, hi):
        out = []
        for i in range(lo, hi):
            rep = gamma(field, coords[i], quadrature_cap=quadrature_cap, quad_tol=quad_tol)
            out.append(math.inf if rep.diverged else rep.value)
        return out

    chunks = map_ordered_batches(batch, coords.shape[0], batch_size=64, workers=workers)
    trace = tuple(v for chunk in chunks for v in chunk)
    running = 0.0
    for j, v in enumerate(trace):
        if not math.isfinite(v):
            return ExpectationReport(None, True, trace)
        running += v
        if running / (j + 1) > quadrature_cap:
            return ExpectationReport(None, True, trace)
    return ExpectationReport(running / len(trace), False, trace)


def push_measure_gamma(
    field: SpeedField,
    samples,
    xi,
    *,
    quadrature_cap: float = 1e12,
    quad_tol: float = 1e-9,
) -> float:
    """Ratio transport of an observable from base samples to the slowed flow:

        E[ integral_0^gamma(x) xi(phi_t(x, 0)) dt ] / E[gamma],

    computed along fibers via dt = du / alpha.  ``xi`` maps (coords, heights)
    arrays to values."""
    coords = _as_coords(samples)
    if coords.shape[0] == 0:
        raise EmptySamples("push_measure_gamma needs at least one sample")
    if field.base_map is None:
        raise ValueError("push_measure_gamma needs a field over a suspension")
    denom = expected_gamma(
        field, coords, quadrature_cap=quadrature_cap, quad_tol=quad_tol
    )
    if denom.diverged:
        raise DivergedDenominator("expected return time diverged on this sample set")
    reciprocal = (
        ConstantIntegrand(1.0 / field.constant_value)
        if field.kind == "constant"
        else ReciprocalSpeedIntegrand(field)
    )

    class _Weighted:
        singular_point = getattr(reciprocal, "singular_point", None)
        field = getattr(reciprocal, "field", None)

        @staticmethod
        def values(cs, hs):
            return reciprocal.values(cs, hs) * np.asarray(xi(cs, hs), dtype=float)

    total = 0.0
    for i in range(coords.shape[0]):
        q = SuspensionPoint(TorusPoint(tuple(coords[i])), 0.0)
        fib = _FiberEval(field.base_map, q, _Weighted())
        res = adaptive_simpson(
            fib, 0.0, 1.0, quad_tol, value_cap=quadrature_cap,
            breakpoints=_span_breakpoints(fib, 0.0, 1.0),
        )
        if res.diverged:
            raise DivergedDenominator("fiber transport integral diverged")
        total += res.value
    return (total / coords.shape[0]) / denom.value


@dataclass(frozen=True)
class DensityEstimate:
    value: float | None
    diverged: bool
    trace: np.ndarray = dc_field(repr=False, default=None, compare=False)


def pushforward_density(
    field_hat: SpeedField,
    coords: np.ndarray,
    heights: np.ndarray,
    region_indicator=None,
    *,
    integrand_cap: float | None = None,
    quadrature_cap: float = 1e12,
) -> DensityEstimate:
    """Monte Carlo estimate of the reweighted mass integral of 1/alpha-hat over
    a region, from suspension samples.  ``integrand_cap`` truncates the
    integrand, exposing logarithmic (non-integrable) growth as cap escalation."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    heights = np.atleast_1d(np.asarray(heights, dtype=float))
    if coords.shape[0] == 0:
        raise EmptySamples("pushforward_density needs at least one sample")
    speeds = speed_at_arrays(field_hat, coords, heights)
    with np.errstate(divide="ignore"):
        vals = np.where(speeds > 0.0, 1.0 / np.maximum(speeds, 1e-320), np.inf)
    if integrand_cap is not None:
        vals = np.minimum(vals, integrand_cap)
    if region_indicator is not None:
        vals = vals * np.asarray(region_indicator(coords, heights), dtype=float)
    finite = np.all(np.isfinite(vals))
    est = float(np.mean(vals)) if finite else math.inf
    diverged = (not finite) or est > quadrature_cap
    return DensityEstimate(None if diverged else est, diverged, vals)


# ---------------------------------------------------------------------------
# orbit equivalence witness


@dataclass(frozen=True)
class EquivalenceRow:
    s: float
    t: float
    mismatch: float


@dataclass(frozen=True)
class EquivalenceTable:
    rows: tuple[EquivalenceRow, ...]

    @property
    def monotone(self) -> bool:
        ts = [r.t for r in self.rows]
        return all(b > a for a, b in zip(ts, ts[1:]))


def orbit_equivalence_check(
    flow_a: TimeChangedFlow,
    flow_b: TimeChangedFlow,
    q: SuspensionPoint,
    horizon: float,
    *,
    n_samples: int = 16,
    tol: float = 1e-6,
) -> EquivalenceTable:
    """Numerical witness that the identity map sends flow_b orbits to flow_a
    orbits preserving time orientation: for times s_j of flow_b, solves for
    t_j with phi^a_{t_j} q = phi^b_{s_j} q and checks t_j increases."""
    if flow_a.clock.flow != flow_b.clock.flow:
        raise ValueError("both flows must reparameterize the same suspension")
    rows = []
    for j in range(1, n_samples + 1):
        s = horizon * j / n_samples
        u = tau(flow_b, q, s)
        t = theta(flow_a.clock, q, u)
        pa = phi_advance(flow_a, q, t)
        pb = phi_advance(flow_b, q, s)
        mismatch = dist_susp(flow_a.clock.flow, pa, pb)
        if mismatch >= tol:
            raise WitnessNotFound(
                f"orbit match failed at s={s:g}: mismatch {mismatch:g} >= {tol:g}"
            )
        rows.append(EquivalenceRow(s, t, mismatch))
    table = EquivalenceTable(tuple(rows))
    if not table.monotone:
        raise WitnessNotFound("matched times are not strictly increasing")
    return table


# ---------------------------------------------------------------------------
# batch trajectories (shared by the entropy estimators)


@dataclass
class TrajectorySet:
    """Sampled trajectories of a whole cloud along one flow.

    Positions at sample j for point i decode as
    (base_orbits[k_index[j, i], i], heights[j, i]); base_orbits holds enough
    forward iterates for one extra roof crossing (used by metric lookups).
    """

    sample_times: np.ndarray
    base_orbits: np.ndarray
    k_index: np.ndarray
    heights: np.ndarray
    dropped: np.ndarray

    @property
    def n_points(self) -> int:
        return self.base_orbits.shape[1]

    def positions(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.n_points)
        return self.base_orbits[self.k_index[j], idx], self.heights[j].astype(float)


def flow_trajectories(
    flow,
    coords: np.ndarray,
    heights0: np.ndarray,
    sample_times,
    *,
    sub_step: float = 0.05,
    singular_tol: float = SINGULAR_TOLERANCE,
) -> TrajectorySet:
    """Advance a cloud and record positions at the sample times.

    The suspension flow advances exactly.  A time-changed flow integrates the
    scalar fiber-progress law du/dt = 1/a(psi_u q) with fixed-substep RK4 per
    point, vectorized across the cloud; the motion never leaves the psi-orbit,
    so base dynamics stay exact and the only numerical error is in u(t).
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    heights0 = np.atleast_1d(np.asarray(heights0, dtype=float))
    times = np.asarray(sorted(float(t) for t in sample_times))
    if times.size == 0 or times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    n = coords.shape[0]
    if isinstance(flow, SuspensionFlow):
        base_map = flow.base_map
        a_min = 1.0
        speed_fn = None
        singular = None
    else:
        base_map = flow.clock.flow.base_map
        a_min = flow.clock.integrand.min_value()
        if not a_min > 0.0:
            raise ValueError("trajectory engine needs an integrand bounded below")
        speed_fn = flow.clock.integrand.speed_values
        singular = getattr(flow.clock.integrand, "singular_point", None)
    depth = int(math.ceil(times[-1] / a_min + 2.0)) + 1
    orbits = orbit_tensor(base_map, coords, depth)

    def positions_of(u):
        s = heights0 + u
        k = np.minimum(np.floor(s).astype(int), depth - 1)
        return orbits[k, np.arange(n)], s - k, k

    k_index = np.empty((times.size, n), dtype=np.int16)
    heights = np.empty((times.size, n), dtype=np.float32)
    min_norm = np.full(n, np.inf)
    u = np.zeros(n)
    for j, t_j in enumerate(times):
        if j > 0:
            span = t_j - times[j - 1]
            if speed_fn is None:
                u = u + span
            else:
                n_sub = max(1, int(math.ceil(span / sub_step)))
                h = span / n_sub
                for _ in range(n_sub):
                    b1, h1, _ = positions_of(u)
                    k1 = speed_fn(b1, h1)
                    b2, h2, _ = positions_of(u + 0.5 * h * k1)
                    k2 = speed_fn(b2, h2)
                    b3, h3, _ = positions_of(u + 0.5 * h * k2)
                    k3 = speed_fn(b3, h3)
                    b4, h4, _ = positions_of(u + h * k3)
                    k4 = speed_fn(b4, h4)
                    u = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bases, hs, ks = positions_of(u)
        k_index[j] = ks.astype(np.int16)
        heights[j] = hs.astype(np.float32)
        if singular is not None:
            field = flow.clock.integrand.field
            min_norm = np.minimum(min_norm, field.chart_norms(bases, hs))
    if singular is not None:
        field = flow.clock.integrand.field
        dropped = min_norm * (0.5 * field.chart_radius) < singular_tol
    else:
        dropped = np.zeros(n, dtype=bool)
    return TrajectorySet(times, orbits, k_index, heights, dropped)
