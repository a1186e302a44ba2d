"""Emergency braking scenarios and an independent kinematic oracle.

Initial sets live in *gap coordinates*: the joint state layout with the
position slots replaced by the gaps ``[d12, (d23), 0]``. For two cars this
is exactly the initial state; for three cars it keeps the set a box whose
sides are the gap and reaction-time intervals. :class:`AebSystem` maps gap
coordinates to joint states before simulating.

The oracle does not share code with the RK4 simulator. Velocities come from
the closed-form integral of the deceleration profile, positions from a
dense trapezoid sum of those velocities, and the first crossing of the
collision threshold is located by linear interpolation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .simulator import (DEFAULT_T, DEFAULT_TAU, BrakingProfile, CarLayout, ScenarioPoint,
                        simulate_batch)
from .trace_model import HyperRect, UnsafeSet

ORACLE_TAU = 0.001


@dataclass(frozen=True)
class AebSpec:
    v0: tuple[float, ...]
    d_ranges: tuple[tuple[float, float], ...]
    r_ranges: tuple[tuple[float, float], ...]
    profiles: tuple[BrakingProfile, ...]
    theta: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "v0", tuple(float(v) for v in self.v0))
        object.__setattr__(self, "d_ranges", tuple((float(a), float(b)) for a, b in self.d_ranges))
        object.__setattr__(self, "r_ranges", tuple((float(a), float(b)) for a, b in self.r_ranges))
        object.__setattr__(self, "profiles", tuple(self.profiles))
        n = len(self.v0)
        if n not in (2, 3):
            raise ValueError(f"scenarios have 2 or 3 cars, got {n}")
        if len(self.d_ranges) != n - 1 or len(self.r_ranges) != n - 1 or len(self.profiles) != n:
            raise ValueError("need n-1 gap ranges, n-1 reaction ranges and n profiles")
        for lo, hi in self.d_ranges:
            if not 0 < lo <= hi:
                raise ValueError(f"gap range [{lo}, {hi}] must be positive and ordered")
        for lo, hi in self.r_ranges:
            if not 0 <= lo <= hi:
                raise ValueError(f"reaction range [{lo}, {hi}] must be non-negative and ordered")
        if any(v < 0 for v in self.v0):
            raise ValueError("initial velocities must be non-negative")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")

    @property
    def n_cars(self) -> int:
        return len(self.v0)

    @property
    def layout(self) -> CarLayout:
        return CarLayout(self.n_cars)

    def with_cell(self, d_ranges=None, r_ranges=None) -> AebSpec:
        return replace(self, d_ranges=tuple(d_ranges or self.d_ranges),
                       r_ranges=tuple(r_ranges or self.r_ranges))

    def point(self, d: Sequence[float], r: Sequence[float]) -> ScenarioPoint:
        return ScenarioPoint(self.v0, tuple(d), tuple(r), self.profiles)

    def point_from_coords(self, q) -> ScenarioPoint:
        lay = self.layout
        q = np.asarray(q, dtype=float)
        d = [q[lay.s(i)] for i in range(self.n_cars - 1)]
        r = [q[lay.r(i)] for i in range(1, self.n_cars)]
        return self.point(d, r)

    def coords_from_point(self, point: ScenarioPoint) -> np.ndarray:
        lay = self.layout
        q = np.zeros(lay.dim)
        q[lay.s_idx[:-1]] = point.d
        q[lay.v_idx] = point.v0
        for i in range(1, self.n_cars):
            q[lay.r(i)] = point.r[i - 1]
        return q


def gap_to_state(q: np.ndarray, n_cars: int) -> np.ndarray:
    """Map gap coordinates (..., dim) to joint initial states."""
    lay = CarLayout(n_cars)
    x = np.array(q, dtype=float, copy=True)
    gaps = x[..., lay.s_idx]
    # position of car i is the sum of the gaps behind it
    x[..., lay.s_idx] = np.flip(np.cumsum(np.flip(gaps, -1), -1), -1) - gaps[..., -1:]
    return x


def build_initial_set(spec: AebSpec) -> tuple[HyperRect, UnsafeSet, CarLayout]:
    lay = spec.layout
    lo = np.zeros(lay.dim)
    hi = np.zeros(lay.dim)
    for i, (a, b) in enumerate(spec.d_ranges):
        lo[lay.s(i)], hi[lay.s(i)] = a, b
    lo[lay.v_idx] = hi[lay.v_idx] = spec.v0
    for i, (a, b) in enumerate(spec.r_ranges, start=1):
        lo[lay.r(i)], hi[lay.r(i)] = a, b
    K = HyperRect(lo, hi)
    rows, labels = [], []
    for i in range(spec.n_cars - 1):
        a = np.zeros(lay.dim)
        a[lay.s(i)], a[lay.s(i + 1)] = 1.0, -1.0
        rows.append((a, spec.theta))
        labels.append(f"s{i + 1}-s{i + 2}<={spec.theta:g}")
    return K, UnsafeSet.from_constraints(rows, labels), lay


class AebSystem:
    """Black-box system over gap coordinates for one scenario template."""

    def __init__(self, spec: AebSpec):
        self.spec = spec

    def __call__(self, points, tau: float = DEFAULT_TAU, T: float = DEFAULT_T) -> np.ndarray:
        x0 = gap_to_state(np.array(points, dtype=float, ndmin=2), self.spec.n_cars)
        return simulate_batch(x0, self.spec.profiles, tau, T)


@dataclass(frozen=True)
class OracleResult:
    collides: bool
    collision_velocity: float
    min_separation: float
    collision_time: Optional[float] = None
    pair: Optional[tuple[int, int]] = None


def _braking_loss(profile: BrakingProfile, u: np.ndarray) -> np.ndarray:
    """Speed lost ``u`` seconds after the brake engages (0 for u <= 0)."""
    R, P = profile.ramp_s, profile.peak_decel
    u = np.maximum(u, 0.0)
    if R == 0:
        return P * u
    return np.where(u <= R, 0.5 * P * u * u / R, P * (u - 0.5 * R))


def _stop_time(profile: BrakingProfile, v0: float) -> float:
    R, P = profile.ramp_s, profile.peak_decel
    if v0 <= 0.5 * P * R:
        return float(np.sqrt(2.0 * v0 * R / P)) if R > 0 else 0.0
    return v0 / P + 0.5 * R


def _velocity(profile, v0, brake_t, t):
    return np.maximum(v0 - _braking_loss(profile, t - brake_t), 0.0)


def oracle_batch(spec: AebSpec, d: np.ndarray, r: np.ndarray, horizon: float = DEFAULT_T,
                 tau: float = ORACLE_TAU) -> list[OracleResult]:
    """Oracle for many points of one template; ``d`` and ``r`` are (P, n-1)."""
    d = np.array(d, dtype=float, ndmin=2)
    r = np.array(r, dtype=float, ndmin=2)
    n, P = spec.n_cars, d.shape[0]
    theta = spec.theta
    brake = np.concatenate([np.zeros((P, 1)), r], axis=1)
    stops = np.array([[b + _stop_time(spec.profiles[i], spec.v0[i]) for i, b in enumerate(row)]
                      for row in brake])
    t_end = min(horizon, float(stops.max()) + tau)
    M = max(1, int(np.ceil(t_end / tau)))
    t = np.arange(M + 1) * tau

    start = np.concatenate([np.cumsum(d[:, ::-1], axis=1)[:, ::-1], np.zeros((P, 1))], axis=1)
    pos, vel = [], []
    for i in range(n):
        v = _velocity(spec.profiles[i], spec.v0[i], brake[:, i:i + 1], t[None, :])
        s = np.zeros_like(v)
        s[:, 1:] = np.cumsum(0.5 * tau * (v[:, 1:] + v[:, :-1]), axis=1)
        pos.append(start[:, i:i + 1] + s)
        vel.append(v)

    results = []
    gaps = [pos[i] - pos[i + 1] for i in range(n - 1)]
    for p in range(P):
        best = None
        min_sep = np.inf
        for i, g in enumerate(gaps):
            row = g[p]
            min_sep = min(min_sep, float(row.min()))
            hit = np.flatnonzero(row <= theta)
            if hit.size == 0:
                continue
            k = int(hit[0])
            if k == 0:
                tc = 0.0
            else:
                g0, g1 = row[k - 1], row[k]
                tc = t[k - 1] + (g0 - theta) / (g0 - g1) * tau
            # earliest step wins; same step goes to the tighter gap
            key = (k, float(row[k]))
            if best is None or key < best[0]:
                best = (key, i, tc)
        if best is None:
            results.append(OracleResult(False, 0.0, min_sep))
            continue
        _, i, tc = best
        rel = (_velocity(spec.profiles[i + 1], spec.v0[i + 1], brake[p, i + 1], tc)
               - _velocity(spec.profiles[i], spec.v0[i], brake[p, i], tc))
        results.append(OracleResult(True, max(0.0, float(rel)), min(min_sep, theta), float(tc), (i, i + 1)))
    return results


def oracle(point: ScenarioPoint, theta: float = 2.0, horizon: float = DEFAULT_T) -> OracleResult:
    spec = AebSpec(point.v0, [(x, x) for x in point.d], [(x, x) for x in point.r],
                   point.profiles, theta)
    return oracle_batch(spec, [point.d], [point.r], horizon)[0]


def cell_grid(spec: AebSpec, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid over every varying gap / reaction dimension of a cell, endpoints included."""
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    axes = []
    for lo, hi in list(spec.d_ranges) + list(spec.r_ranges):
        axes.append(np.linspace(lo, hi, grid_n) if hi > lo else np.array([lo]))
    pts = np.array(list(itertools.product(*axes)))
    k = spec.n_cars - 1
    return pts[:, :k], pts[:, k:]


def oracle_cell_max(spec: AebSpec, grid_n: int = 20, horizon: float = DEFAULT_T,
                    chunk: int = 512) -> float:
    """Largest oracle collision velocity over a dense grid of the cell."""
    d, r = cell_grid(spec, grid_n)
    worst = 0.0
    for lo in range(0, d.shape[0], chunk):
        for res in oracle_batch(spec, d[lo:lo + chunk], r[lo:lo + chunk], horizon):
            if res.collides:
                worst = max(worst, res.collision_velocity)
    return worst


def closed_form_constant_decel(point: ScenarioPoint, theta: float = 2.0,
                               horizon: float = DEFAULT_T) -> OracleResult:
    """Two-car first crossing for zero-ramp profiles, solved piecewise exactly.

    Between the brake and stop times both decelerations are constant, so the
    gap is a quadratic in time on every piece.
    """
    if point.n_cars != 2 or any(p.ramp_s != 0 for p in point.profiles):
        raise ValueError("closed form only covers two cars with zero ramp")
    v0 = point.v0
    dec = [p.peak_decel for p in point.profiles]
    brake = [0.0, point.r[0]]
    stop = [brake[i] + v0[i] / dec[i] for i in range(2)]
    start = [point.d[0], 0.0]

    def kin(i, t):
        """position, velocity, deceleration of car i at t (right limit)."""
        u = min(max(t - brake[i], 0.0), v0[i] / dec[i])
        s = start[i] + v0[i] * min(t, brake[i]) + v0[i] * u - 0.5 * dec[i] * u * u
        v = v0[i] - dec[i] * u
        return s, v, (dec[i] if brake[i] <= t < stop[i] else 0.0)

    knots = sorted({0.0, horizon, *[x for x in brake + stop if 0 < x < horizon]})
    first = None
    min_gap = np.inf
    for t0, t1 in zip(knots[:-1], knots[1:]):
        (sa, va, da), (sb, vb, db) = kin(0, t0), kin(1, t0)
        g0, w, q = sa - sb, va - vb, 0.5 * (db - da)
        span = t1 - t0
        cand = [0.0, span] + ([-w / (2 * q)] if q and 0 < -w / (2 * q) < span else [])
        min_gap = min(min_gap, min(g0 + w * h + q * h * h for h in cand))
        if first is not None:
            continue
        if g0 <= theta:
            hits = [0.0]
        elif q:
            disc = w * w - 4 * q * (g0 - theta)
            hits = [] if disc < 0 else [(-w - sg * np.sqrt(disc)) / (2 * q) for sg in (1, -1)]
        else:
            hits = [-(g0 - theta) / w] if w else []
        hits = sorted(h for h in hits if 0 <= h <= span)
        if hits:
            h = hits[0]
            first = (t0 + h, (vb - db * h) - (va - da * h))
    if first is None:
        return OracleResult(False, 0.0, float(min_gap))
    return OracleResult(True, max(0.0, float(first[1])), float(min_gap), float(first[0]), (0, 1))
