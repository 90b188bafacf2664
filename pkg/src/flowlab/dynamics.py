"""Torus maps and the unit-speed suspension flow built over them.

Points on the m-torus carry coordinates in [0,1) with mod-1 arithmetic; the
metric is the max over coordinates of circle distance, so balls are axis
aligned boxes.  The suspension glues (x, 1) to (f(x), 0) and moves points up
the fiber at unit speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import circle_dist

TORAL_AUTOMORPHISM = "toral_automorphism"
ROTATION = "rotation"


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple[float, ...]

    def __post_init__(self):
        if len(self.coords) < 1:
            raise ValueError("torus point needs at least one coordinate")
        object.__setattr__(
            self, "coords", tuple(float(c) - math.floor(float(c)) for c in self.coords)
        )

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class BaseMap:
    """A discrete system on the m-torus: an integer automorphism or a rotation."""

    kind: str
    matrix: tuple[tuple[int, ...], ...] | None = None
    angles: tuple[float, ...] | None = None
    known_entropy_oracle: float | None = None

    def __post_init__(self):
        if self.kind == TORAL_AUTOMORPHISM:
            if self.matrix is None:
                raise ValueError("toral automorphism needs a matrix")
            mat = np.asarray(self.matrix, dtype=np.int64)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError("matrix must be square")
            det = int(round(np.linalg.det(mat.astype(float))))
            if det not in (-1, 1):
                raise ValueError("matrix must have determinant +-1")
            object.__setattr__(self, "matrix", tuple(tuple(int(v) for v in row) for row in mat))
        elif self.kind == ROTATION:
            if self.angles is None:
                raise ValueError("rotation needs an angle vector")
            object.__setattr__(self, "angles", tuple(float(a) % 1.0 for a in self.angles))
        else:
            raise ValueError(f"unknown base map kind: {self.kind!r}")

    @property
    def dim(self) -> int:
        if self.kind == TORAL_AUTOMORPHISM:
            return len(self.matrix)
        return len(self.angles)

    def _matrices(self) -> tuple[np.ndarray, np.ndarray]:
        mat = np.asarray(self.matrix, dtype=np.int64)
        det = int(round(np.linalg.det(mat.astype(float))))
        inv = np.rint(np.linalg.inv(mat.astype(float)) * det).astype(np.int64) * det
        if not np.array_equal(mat @ inv, np.eye(self.dim, dtype=np.int64)):
            raise ValueError("integer inverse check failed")
        return mat, inv

    def step_batch(self, coords: np.ndarray, *, inverse: bool = False) -> np.ndarray:
        """One application of the map (or its inverse) to an (N, m) array."""
        coords = np.asarray(coords, dtype=float)
        if self.kind == ROTATION:
            ang = np.asarray(self.angles)
            return (coords + (-ang if inverse else ang)) % 1.0
        mat, inv = self._matrices()
        use = inv if inverse else mat
        return (coords @ use.T.astype(float)) % 1.0

    def entropy_oracle(self) -> float:
        """Reference entropy in nats per iterate, independent of any estimator."""
        if self.known_entropy_oracle is not None:
            return self.known_entropy_oracle
        if self.kind == ROTATION:
            return 0.0
        eigs = np.linalg.eigvals(np.asarray(self.matrix, dtype=float))
        return float(np.sum(np.log(np.abs(eigs[np.abs(eigs) > 1.0]))))


def make_cat_map() -> BaseMap:
    return BaseMap(TORAL_AUTOMORPHISM, matrix=((2, 1), (1, 1)))


def make_rotation(*angles: float) -> BaseMap:
    return BaseMap(ROTATION, angles=tuple(angles))


GOLDEN_ANGLE = (math.sqrt(5.0) - 1.0) / 2.0


def apply_base(base_map: BaseMap, x: TorusPoint, n: int = 1) -> TorusPoint:
    """n-fold composition of the map; negative n uses the exact inverse."""
    coords = x.as_array()[None, :]
    if base_map.kind == ROTATION:
        coords = (coords + n * np.asarray(base_map.angles)) % 1.0
    else:
        for _ in range(abs(int(n))):
            coords = base_map.step_batch(coords, inverse=n < 0)
    return TorusPoint(tuple(coords[0]))


def apply_base_batch(base_map: BaseMap, coords: np.ndarray, n: int = 1) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if base_map.kind == ROTATION:
        return (coords + n * np.asarray(base_map.angles)) % 1.0
    for _ in range(abs(int(n))):
        coords = base_map.step_batch(coords, inverse=n < 0)
    return coords


def orbit_tensor(base_map: BaseMap, coords: np.ndarray, n_steps: int) -> np.ndarray:
    """Forward orbit stack: out[i] = f^i(coords), shape (n_steps, N, m)."""
    coords = np.asarray(coords, dtype=float)
    out = np.empty((n_steps,) + coords.shape, dtype=float)
    out[0] = coords
    for i in range(1, n_steps):
        out[i] = base_map.step_batch(out[i - 1])
    return out


def dist_base(x, y) -> float:
    """Max over coordinates of circle distance."""
    xa = x.as_array() if isinstance(x, TorusPoint) else np.asarray(x, dtype=float)
    ya = y.as_array() if isinstance(y, TorusPoint) else np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise ValueError("points live on tori of different dimension")
    return float(np.max(circle_dist(xa, ya)))


@dataclass(frozen=True)
class SuspensionPoint:
    base: TorusPoint
    height: float

    def __post_init__(self):
        if not 0.0 <= self.height < 1.0:
            raise ValueError("height must lie in [0, 1); advance folds crossings")
        object.__setattr__(self, "height", float(self.height))

    @property
    def dim(self) -> int:
        return self.base.dim + 1


@dataclass(frozen=True)
class SuspensionFlow:
    """Unit-speed flow on the mapping torus of ``base_map``."""

    base_map: BaseMap
    field_norm: float = 1.0

    def __post_init__(self):
        if self.field_norm != 1.0:
            raise ValueError("the standard suspension has unit fiber speed")


def suspension_advance(flow: SuspensionFlow, q: SuspensionPoint, t: float) -> SuspensionPoint:
    """Advance t units up the fiber, applying the base map at each roof crossing."""
    s = q.height + float(t)
    k = math.floor(s)
    base = apply_base(flow.base_map, q.base, k) if k != 0 else q.base
    height = s - k
    if height >= 1.0:  # float guard at the roof
        base = apply_base(flow.base_map, base, 1)
        height = 0.0
    return SuspensionPoint(base, height)


def _susp_candidates(flow, xa, sa, ya, sb):
    fmap = flow.base_map if isinstance(flow, SuspensionFlow) else flow
    d_direct = max(float(np.max(circle_dist(xa, ya))), abs(sa - sb))
    fx = apply_base_batch(fmap, xa[None, :])[0]
    fy = apply_base_batch(fmap, ya[None, :])[0]
    d_up = max(float(np.max(circle_dist(fx, ya))), (1.0 - sa) + sb)
    d_down = max(float(np.max(circle_dist(xa, fy))), (1.0 - sb) + sa)
    return min(d_direct, d_up, d_down)


def dist_susp(flow, q: SuspensionPoint, w: SuspensionPoint) -> float:
    """Adapted metric on the suspension: shortest of the direct and single
    roof-crossing comparisons, each a max of base distance and fiber gap."""
    if q.base.dim != w.base.dim:
        raise ValueError("points live on suspensions of different dimension")
    return _susp_candidates(flow, q.base.as_array(), q.height, w.base.as_array(), w.height)
