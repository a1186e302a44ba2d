"""Geometric and trajectory value types shared by every other module.

States are plain 1-D float numpy arrays. Boxes, traces and tubes keep their
data as arrays so the verifier can work on whole batches at once.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when two objects that must share a state dimension do not."""


def as_state(coords) -> np.ndarray:
    x = np.array(coords, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("state vector must have at least one coordinate")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"state vector has non-finite coordinates: {x}")
    return x


def distance(a, b, norm: str = "inf") -> float:
    """Distance between two state vectors under the L-infinity or L2 norm."""
    a = as_state(a)
    b = as_state(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.size} vs {b.size}")
    diff = np.abs(a - b)
    if norm in ("inf", "Linf"):
        return float(diff.max())
    if norm in ("2", "L2"):
        # scale by the largest component so tiny differences do not underflow
        m = diff.max()
        return 0.0 if m == 0 else float(m * np.sqrt(np.sum((diff / m) ** 2)))
    raise ValueError(f"unknown norm {norm!r}")


@dataclass(frozen=True, eq=False)
class HyperRect:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_state(self.lo)
        hi = as_state(self.hi)
        if lo.shape != hi.shape:
            raise DimensionError(f"lo has {lo.size} dims, hi has {hi.size}")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lo={lo} hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> HyperRect:
        arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @classmethod
    def point(cls, x) -> HyperRect:
        x = as_state(x)
        return cls(x, x.copy())

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self) -> float:
        """L-infinity radius around the center (largest half-width)."""
        return float(0.5 * self.widths.max())

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_box(self, other: HyperRect, tol: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def intervals(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, HyperRect):
            return NotImplemented
        return bool(np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self) -> str:
        return f"HyperRect({self.intervals()})"


def grid_cover(K: HyperRect, delta: float) -> list[tuple[np.ndarray, HyperRect]]:
    """Partition ``K`` into an axis-aligned grid of cells of L-inf radius <= delta.

    Each dimension gets ``ceil(width / (2 delta))`` cells (one for a
    zero-width dimension). Cells are returned in row-major order together
    with their centers.
    """
    if not delta > 0:
        raise ValueError(f"cover radius must be positive, got {delta}")
    edges = []
    for lo, hi in zip(K.lo, K.hi):
        width = hi - lo
        # the 1e-9 slack keeps 0.3/0.1 from rounding up to an extra cell
        n = max(1, math.ceil(width / (2.0 * delta) - 1e-9)) if width > 0 else 1
        e = lo + (hi - lo) * np.arange(n + 1) / n
        e[-1] = hi
        edges.append(e)
    cells = []
    for idx in itertools.product(*(range(len(e) - 1) for e in edges)):
        lo = np.array([edges[d][i] for d, i in enumerate(idx)])
        hi = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
        cell = HyperRect(lo, hi)
        cells.append((cell.center, cell))
    return cells


def refine_cell(cell: HyperRect) -> tuple[HyperRect, HyperRect]:
    """Bisect the widest dimension (lowest index wins ties)."""
    widths = cell.widths
    if not np.any(widths > 0):
        raise ValueError("cannot refine a cell with zero width in every dimension")
    k = int(np.argmax(widths))
    mid = 0.5 * (cell.lo[k] + cell.hi[k])
    hi_left = cell.hi.copy()
    hi_left[k] = mid
    lo_right = cell.lo.copy()
    lo_right[k] = mid
    return HyperRect(cell.lo, hi_left), HyperRect(lo_right, cell.hi)


@dataclass(frozen=True, eq=False)
class Trace:
    """Uniformly sampled trajectory; ``states[k]`` is the state at ``k * step``.

    ``origin`` is the point the trace was generated from in the coordinates
    of the initial set. It defaults to ``states[0]``; scenario systems whose
    initial set is parameterized differently from the raw state (for example
    separations instead of absolute positions) store the parameter point.
    """

    step: float
    states: np.ndarray
    origin: np.ndarray | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"trace step must be positive, got {self.step}")
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError("states must be a (N+1, dim) array")
        states.flags.writeable = False
        object.__setattr__(self, "states", states)
        origin = states[0] if self.origin is None else as_state(self.origin)
        object.__setattr__(self, "origin", origin)

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.step, self.n_steps)

    @property
    def horizon(self) -> float:
        return self.step * self.n_steps

    def __len__(self) -> int:
        return self.states.shape[0]


def sample_times(step: float, n_steps: int) -> np.ndarray:
    return np.arange(n_steps + 1) * step


@dataclass(frozen=True, eq=False)
class ReachTube:
    """Boxes ``[lo[k], hi[k]]`` over-approximating the states at ``k * step``."""

    step: float
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise DimensionError("tube bounds must be matching (N+1, dim) arrays")
        if np.any(hi < lo):
            raise ValueError("tube has a negative width")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def boxes(self) -> list[HyperRect]:
        return [HyperRect(a, b) for a, b in zip(self.lo, self.hi)]

    def __len__(self) -> int:
        return self.lo.shape[0]

    def __iter__(self) -> Iterator[HyperRect]:
        return iter(self.boxes)

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.step, len(self) - 1)

    def segment_hulls(self) -> ReachTube:
        """Hulls of consecutive boxes, one per sampling interval.

        For dynamics that are monotone between samples (as the car model is)
        the hull of boxes k and k+1 covers the continuous-time states in
        between, which is what interval checks between samples rely on.
        """
        if len(self) == 1:
            return self
        lo = np.minimum(self.lo[:-1], self.lo[1:])
        hi = np.maximum(self.hi[:-1], self.hi[1:])
        return ReachTube(self.step, lo, hi)

    def contains_states(self, states: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Per-sample membership of a trajectory given as an (N+1, dim) array."""
        states = np.asarray(states, dtype=float)
        return np.all((states >= self.lo - tol) & (states <= self.hi + tol), axis=-1)


def bloat_trace(trace: Trace, disc, delta: float) -> ReachTube:
    """Expand ``trace`` by ``delta * c_i * exp(gamma_i t)`` in every dimension."""
    if disc.dim != trace.dim:
        raise DimensionError(f"discrepancy has {disc.dim} dims, trace has {trace.dim}")
    rho = delta * disc.growth(trace.times)
    return ReachTube(trace.step, trace.states - rho, trace.states + rho)


class Hit(enum.Enum):
    DISJOINT = "disjoint"
    OVERLAPS = "overlaps"
    CONTAINED = "contained"


@dataclass(frozen=True, eq=False)
class UnsafeSet:
    """Union of closed half-spaces ``a . x <= b``."""

    A: np.ndarray
    b: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] == 0:
            raise ValueError("unsafe set needs at least one constraint")
        if b.shape != (A.shape[0],):
            raise DimensionError("one bound per constraint row is required")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_constraints(cls, constraints, labels=()) -> UnsafeSet:
        A = [c[0] for c in constraints]
        b = [c[1] for c in constraints]
        return cls(np.array(A, dtype=float), np.array(b, dtype=float), tuple(labels))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def _check(self, d: int):
        if d != self.dim:
            raise DimensionError(f"unsafe set has {self.dim} dims, got {d}")

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        self._check(x.shape[-1])
        return bool(np.any(self.A @ x <= self.b))

    def points_unsafe(self, xs: np.ndarray) -> np.ndarray:
        """Boolean mask over the leading axes of an (..., dim) array."""
        xs = np.asarray(xs, dtype=float)
        self._check(xs.shape[-1])
        return np.any(xs @ self.A.T <= self.b, axis=-1)

    def box_bounds(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interval ``[min, max]`` of every ``a . x`` over boxes; shapes (..., m)."""
        pos = np.clip(self.A, 0, None)
        neg = np.clip(self.A, None, 0)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        self._check(lo.shape[-1])
        vmin = lo @ pos.T + hi @ neg.T
        vmax = hi @ pos.T + lo @ neg.T
        return vmin, vmax

    def classify_boxes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """0 = disjoint, 1 = overlaps, 2 = contained, over the leading axes."""
        vmin, vmax = self.box_bounds(lo, hi)
        disjoint = np.all(vmin > self.b, axis=-1)
        contained = np.any(vmax <= self.b, axis=-1)
        return np.where(disjoint, 0, np.where(contained, 2, 1))


_HIT_CODES = (Hit.DISJOINT, Hit.OVERLAPS, Hit.CONTAINED)


def box_hits_unsafe(box: HyperRect, U: UnsafeSet) -> Hit:
    return _HIT_CODES[int(U.classify_boxes(box.lo, box.hi))]
