"""Fixed-step RK4 simulation of single-lane car platoons.

Every car is a two-mode hybrid system. In ``cruise`` it holds its initial
speed; in ``brake`` its deceleration ramps linearly from 0 to a peak value
over ``ramp_s`` seconds and stays there until the car stops. The lead car
brakes at t = 0, car i > 1 brakes once the clock reaches its reaction time.

Joint state layout for n cars::

    [s1, v1, s2, v2, (s3, v3), clock, r2, (r3)]

Reaction times ride along as constant state dimensions so a trace carries
everything a discrepancy learner needs to see.

Mode switches and ramp ends are resolved by splitting the integration step
at the event time. Within a piece the acceleration is a polynomial in time
and RK4 is exact. A car whose speed would go negative is stopped at the
linearly interpolated crossing time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .trace_model import Trace, sample_times

DEFAULT_TAU = 0.01
DEFAULT_T = 20.0


@dataclass(frozen=True)
class BrakingProfile:
    ramp_s: float
    peak_decel: float
    label: str = "custom"

    def __post_init__(self):
        if not 0 < self.peak_decel <= 12:
            raise ValueError(f"peak deceleration must be in (0, 12] m/s^2, got {self.peak_decel}")
        if not 0 <= self.ramp_s <= 5:
            raise ValueError(f"ramp time must be in [0, 5] s, got {self.ramp_s}")

    @classmethod
    def preset(cls, name: str) -> BrakingProfile:
        try:
            ramp, peak = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown braking preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(ramp, peak, name)

    def to_dict(self) -> dict:
        if self.label in PRESETS and PRESETS[self.label] == (self.ramp_s, self.peak_decel):
            return {"preset": self.label}
        return {"ramp_s": self.ramp_s, "peak_decel": self.peak_decel}

    @classmethod
    def from_dict(cls, d) -> BrakingProfile:
        if isinstance(d, str):
            return cls.preset(d)
        if "preset" in d:
            return cls.preset(d["preset"])
        return cls(float(d["ramp_s"]), float(d["peak_decel"]), "custom")


# (ramp seconds, peak deceleration m/s^2)
PRESETS = {
    "mild": (1.0, 3.0),
    "medium": (0.8, 5.0),
    "hard": (0.5, 8.0),
}


def car_decel(profile: BrakingProfile, t_since_brake: float, v: float) -> float:
    """Deceleration magnitude of a braking car ``t_since_brake`` seconds in."""
    if v <= 0 or t_since_brake < 0:
        return 0.0
    if profile.ramp_s == 0:
        return profile.peak_decel
    return min(1.0, t_since_brake / profile.ramp_s) * profile.peak_decel


@dataclass(frozen=True)
class CarLayout:
    n_cars: int

    def __post_init__(self):
        if self.n_cars < 1:
            raise ValueError("need at least one car")

    def s(self, car: int) -> int:
        return 2 * car

    def v(self, car: int) -> int:
        return 2 * car + 1

    @property
    def clock(self) -> int:
        return 2 * self.n_cars

    def r(self, car: int) -> int:
        """Index of the reaction time of following car ``car`` (1-based follower)."""
        if not 1 <= car < self.n_cars:
            raise IndexError(f"car {car} has no reaction-time dimension")
        return 2 * self.n_cars + car

    @property
    def dim(self) -> int:
        return 3 * self.n_cars

    @property
    def s_idx(self) -> np.ndarray:
        return np.arange(self.n_cars) * 2

    @property
    def v_idx(self) -> np.ndarray:
        return np.arange(self.n_cars) * 2 + 1

    @property
    def names(self) -> list[str]:
        names = []
        for i in range(self.n_cars):
            names += [f"s{i + 1}", f"v{i + 1}"]
        names.append("clock")
        names += [f"r{i + 1}" for i in range(1, self.n_cars)]
        return names


@dataclass(frozen=True)
class ScenarioPoint:
    """One concrete scenario: d[i] is the gap between car i+1 and car i+2."""

    v0: tuple[float, ...]
    d: tuple[float, ...]
    r: tuple[float, ...]
    profiles: tuple[BrakingProfile, ...] = field(default=())

    def __post_init__(self):
        n = len(self.v0)
        if n not in (2, 3):
            raise ValueError(f"scenarios have 2 or 3 cars, got {n}")
        object.__setattr__(self, "v0", tuple(float(x) for x in self.v0))
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        object.__setattr__(self, "r", tuple(float(x) for x in self.r))
        if not self.profiles:
            object.__setattr__(self, "profiles", (BrakingProfile.preset("medium"),) * n)
        if len(self.d) != n - 1 or len(self.r) != n - 1 or len(self.profiles) != n:
            raise ValueError("d and r need n_cars - 1 entries and profiles n_cars")
        if any(x <= 0 for x in self.d):
            raise ValueError(f"separations must be positive: {self.d}")
        if any(x < 0 for x in self.r):
            raise ValueError(f"reaction times must be non-negative: {self.r}")
        if any(x < 0 for x in self.v0):
            raise ValueError(f"velocities must be non-negative: {self.v0}")

    @property
    def n_cars(self) -> int:
        return len(self.v0)

    @property
    def layout(self) -> CarLayout:
        return CarLayout(self.n_cars)

    def initial_state(self) -> np.ndarray:
        lay = self.layout
        x = np.zeros(lay.dim)
        # rear car at 0, each car ahead offset by the gaps behind it
        pos = np.concatenate([np.cumsum(self.d[::-1])[::-1], [0.0]])
        x[lay.s_idx] = pos
        x[lay.v_idx] = self.v0
        for i in range(1, self.n_cars):
            x[lay.r(i)] = self.r[i - 1]
        return x


def rk4_step(f: Callable, t: float, x: np.ndarray, h) -> np.ndarray:
    """One classical Runge-Kutta step; ``h`` may be a scalar or a column of per-row steps."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_steps_for(tau: float, T: float) -> int:
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    if not T >= tau:
        raise ValueError(f"horizon {T} shorter than step {tau}")
    return max(1, int(round(T / tau)))


def integrate(f: Callable, x0s, tau: float, T: float) -> np.ndarray:
    """Integrate autonomous ``x' = f(x)`` for a batch of initial states.

    ``f`` maps a (B, dim) array to its derivative. Returns (B, N+1, dim).
    """
    x = np.array(x0s, dtype=float, ndmin=2)
    n = n_steps_for(tau, T)
    out = np.empty((x.shape[0], n + 1, x.shape[1]))
    out[:, 0] = x
    g = lambda t, y: f(y)  # noqa: E731
    for k in range(n):
        x = rk4_step(g, k * tau, x, tau)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at t={(k + 1) * tau}")
        out[:, k + 1] = x
    return out


class _Platoon:
    """Vectorized car dynamics for a batch sharing one profile per car."""

    def __init__(self, profiles: Sequence[BrakingProfile]):
        self.n = len(profiles)
        self.ramp = np.array([p.ramp_s for p in profiles])
        self.peak = np.array([p.peak_decel for p in profiles])
        self._ramp_div = np.where(self.ramp > 0, self.ramp, 1.0)

    def deriv(self, brake_t: np.ndarray, stopped: np.ndarray, t_mid: float) -> Callable:
        """Derivative of the dynamic part ``[s1, v1, s2, v2, ...]`` (B, 2n).

        The mode of each car is frozen over the piece, decided at its
        midpoint ``t_mid``; no event may fall strictly inside the piece.
        """
        ramp, peak, ramp_div = self.ramp, self.peak, self._ramp_div
        braking = (t_mid >= brake_t) & ~stopped

        def f(t, y):
            u = t - brake_t
            frac = np.where(ramp > 0, np.clip(u / ramp_div, 0.0, 1.0), 1.0)
            a = np.where(braking, peak * frac, 0.0)
            dy = np.empty_like(y)
            dy[:, 0::2] = y[:, 1::2]
            dy[:, 1::2] = -a
            return dy

        return f

    def event_times(self, brake_t: np.ndarray) -> np.ndarray:
        """Times at which the acceleration law changes form, (B, 2n)."""
        return np.concatenate([brake_t, brake_t + self.ramp], axis=1)

    def advance_one(self, y: np.ndarray, brake_t: np.ndarray, t0: float, t1: float) -> np.ndarray:
        """Advance a single row from t0 to t1, splitting at events and stops."""
        y = y.copy()
        events = np.sort(self.event_times(brake_t).ravel())
        while t0 < t1:
            inside = events[(events > t0) & (events < t1)]
            tb = float(inside[0]) if inside.size else t1
            stopped = y[:, 1::2] == 0.0
            f = self.deriv(brake_t, stopped, 0.5 * (t0 + tb))
            z = rk4_step(f, t0, y, tb - t0)
            v_old = y[0, 1::2]
            v_new = z[0, 1::2]
            crossing = (~stopped[0]) & (v_new < 0)
            if np.any(crossing):
                frac = np.full(self.n, np.inf)
                frac[crossing] = v_old[crossing] / (v_old[crossing] - v_new[crossing])
                car = int(np.argmin(frac))
                tb = t0 + float(frac[car]) * (tb - t0)
                z = rk4_step(f, t0, y, tb - t0)
                z[0, 2 * car + 1] = 0.0
            v = z[0, 1::2]
            v[v < 0] = 0.0
            y, t0 = z, tb
        return y


def simulate_batch(x0s, profiles: Sequence[BrakingProfile], tau: float = DEFAULT_TAU,
                   T: float = DEFAULT_T) -> np.ndarray:
    """Simulate a batch of joint initial states; returns (B, N+1, dim).

    Rows are computed independently of each other, so a batch of one gives
    bit-identical results to the same row inside a larger batch.
    """
    x0s = np.array(x0s, dtype=float, ndmin=2)
    n_cars = len(profiles)
    lay = CarLayout(n_cars)
    if x0s.shape[1] != lay.dim:
        raise ValueError(f"{n_cars}-car states have {lay.dim} dims, got {x0s.shape[1]}")
    if not np.all(np.isfinite(x0s)):
        raise FloatingPointError("non-finite initial state")
    n = n_steps_for(tau, T)
    times = sample_times(tau, n)
    B = x0s.shape[0]
    plat = _Platoon(profiles)

    brake_t = np.zeros((B, n_cars))
    for i in range(1, n_cars):
        brake_t[:, i] = x0s[:, lay.r(i)]
    events = plat.event_times(brake_t)
    last_event = events.max(axis=1)

    dyn = np.empty((B, n + 1, 2 * n_cars))
    y = x0s[:, : 2 * n_cars].copy()
    y[:, 1::2] = np.maximum(y[:, 1::2], 0.0)
    dyn[:, 0] = y
    for k in range(n):
        t0, t1 = times[k], times[k + 1]
        stopped = y[:, 1::2] == 0.0
        if np.all(stopped) and np.all(last_event <= t0):
            dyn[:, k + 1:] = y[:, None, :]
            break
        z = rk4_step(plat.deriv(brake_t, stopped, 0.5 * (t0 + t1)), t0, y, t1 - t0)
        special = np.any((events > t0) & (events < t1), axis=1)
        special |= np.any(~stopped & (z[:, 1::2] < 0), axis=1)
        for i in np.flatnonzero(special):
            z[i] = plat.advance_one(y[i:i + 1], brake_t[i:i + 1], t0, t1)[0]
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite state at t={t1}")
        y = z
        dyn[:, k + 1] = y

    out = np.empty((B, n + 1, lay.dim))
    out[:, :, : 2 * n_cars] = dyn
    out[:, :, lay.clock] = times
    for i in range(1, n_cars):
        out[:, :, lay.r(i)] = x0s[:, None, lay.r(i)]
    return out


def simulate(point: ScenarioPoint, tau: float = DEFAULT_TAU, T: float = DEFAULT_T) -> Trace:
    states = simulate_batch(point.initial_state()[None, :], point.profiles, tau, T)[0]
    return Trace(tau, states)


def separation(trace: Trace, pair: tuple[int, int]) -> np.ndarray:
    """``s_front - s_rear`` at every sample (0-based car indices)."""
    front, rear = pair
    n_cars = trace.dim // 3
    if trace.dim != 3 * n_cars or not (0 <= front < n_cars and 0 <= rear < n_cars):
        raise IndexError(f"pair {pair} invalid for a {trace.dim}-dim trace")
    lay = CarLayout(n_cars)
    return trace.states[:, lay.s(front)] - trace.states[:, lay.s(rear)]
