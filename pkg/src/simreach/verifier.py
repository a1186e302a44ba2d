"""Cover-and-refine safety verification driven by simulations.

The initial set is covered by a grid of cells. Each cell's center is
simulated and the trace is bloated by the learned discrepancy times the
cell radius. A tube that misses the unsafe set clears its cell; a center
trace that enters the unsafe set is a counterexample; anything else is
bisected and retried, up to a depth cap past which the cell is reported
unknown.

Cells are processed in FIFO order, one refinement level at a time, so a
whole level is simulated as one batch.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .discrepancy import DiscrepancyFn, PacParams, learn_arrays, required_samples, sample_initial
from .simulator import DEFAULT_T, DEFAULT_TAU, CarLayout
from .trace_model import (DimensionError, HyperRect, ReachTube, Trace, UnsafeSet, grid_cover,
                          refine_cell, sample_times)

log = logging.getLogger(__name__)

_CHUNK = 256


class System(Protocol):
    """Black-box trace generator.

    Called with an (n, p) array of points in initial-set coordinates, it
    returns the sampled joint states as an (n, N+1, dim) array.
    """

    def __call__(self, points: np.ndarray, tau: float, T: float) -> np.ndarray: ...


SeverityFn = Callable[[ReachTube], Optional[float]]


@dataclass(frozen=True)
class VerifierConfig:
    delta_cover: float = 0.5
    max_refine_depth: int = 12
    tau: float = DEFAULT_TAU
    T: float = DEFAULT_T
    m_train: Optional[int] = None
    pac: Optional[PacParams] = PacParams(0.05, 0.01)
    seed: int = 0

    def __post_init__(self):
        if not self.delta_cover > 0:
            raise ValueError(f"delta_cover must be positive, got {self.delta_cover}")
        if self.max_refine_depth < 0:
            raise ValueError("max_refine_depth must be >= 0")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.T >= self.tau:
            raise ValueError(f"T must be at least tau, got T={self.T}")
        if self.m_train is None and self.pac is None:
            raise ValueError("give either m_train or PAC parameters")
        if self.m_train is not None and self.m_train < 2:
            raise ValueError("m_train must be at least 2")

    @property
    def n_train(self) -> int:
        if self.m_train is not None:
            return self.m_train
        return max(2, required_samples(self.pac))


class Kind(str, enum.Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"
    UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class Counterexample:
    origin: np.ndarray
    trace: Trace
    time_index: int

    @property
    def time(self) -> float:
        return self.time_index * self.trace.step


@dataclass(frozen=True, eq=False)
class Verdict:
    kind: Kind
    counterexample: Optional[Counterexample] = None
    severity_bound: Optional[float] = None
    cells_processed: int = 0
    max_depth_reached: int = 0
    unknown_cells: list[HyperRect] = field(default_factory=list)

    @property
    def safe(self) -> bool:
        return self.kind is Kind.SAFE


def extract_severity(tube: ReachTube, front: int, rear: int, theta: float,
                     between_samples: bool = False) -> Optional[float]:
    """Upper bound on the closing speed wherever the gap may be <= theta.

    Cars are 0-based indices into the standard platoon layout. With
    ``between_samples`` the check runs on hulls of consecutive boxes, which
    also covers a crossing that happens between two samples.
    """
    if between_samples:
        tube = tube.segment_hulls()
    gap_lo = tube.lo[:, 2 * front] - tube.hi[:, 2 * rear]
    close = gap_lo <= theta
    if not np.any(close):
        return None
    rel = tube.hi[close, 2 * rear + 1] - tube.lo[close, 2 * front + 1]
    return max(0.0, float(rel.max()))


def platoon_severity(n_cars: int, theta: float) -> SeverityFn:
    """Worst bound over all adjacent pairs of an n-car platoon."""
    CarLayout(n_cars)

    def severity(tube: ReachTube) -> Optional[float]:
        vals = [extract_severity(tube, i, i + 1, theta, between_samples=True)
                for i in range(n_cars - 1)]
        vals = [v for v in vals if v is not None]
        return max(vals) if vals else None

    return severity


@dataclass
class _Cell:
    box: HyperRect
    depth: int


def verify(sim: System, K: HyperRect, U: UnsafeSet, disc: DiscrepancyFn,
           cfg: VerifierConfig, severity: Optional[SeverityFn] = None) -> Verdict:
    if disc.horizon + 1e-9 < cfg.T:
        raise ValueError(f"discrepancy horizon {disc.horizon} shorter than T={cfg.T}")
    times = None
    growth = None
    level = [_Cell(cell, 0) for _, cell in grid_cover(K, cfg.delta_cover)]
    processed = 0
    max_depth = 0
    unknown: list[tuple[HyperRect, Optional[float]]] = []

    while level:
        depth = level[0].depth
        max_depth = max(max_depth, depth)
        next_level: list[_Cell] = []
        cex: Optional[Counterexample] = None
        level_sev: list[Optional[float]] = []
        for start in range(0, len(level), _CHUNK):
            chunk = level[start:start + _CHUNK]
            centers = np.stack([c.box.center for c in chunk])
            radii = np.array([c.box.radius for c in chunk])
            states = np.asarray(sim(centers, cfg.tau, cfg.T), dtype=float)
            if states.ndim != 3 or states.shape[0] != len(chunk):
                raise ValueError("system returned a malformed state array")
            if states.shape[2] != disc.dim or states.shape[2] != U.dim:
                raise DimensionError(
                    f"trace dim {states.shape[2]}, discrepancy {disc.dim}, unsafe set {U.dim}")
            if growth is None:
                times = sample_times(cfg.tau, states.shape[1] - 1)
                growth = disc.growth(times)
            processed += len(chunk)
            rho = radii[:, None, None] * growth[None]
            lo, hi = states - rho, states + rho
            # hulls of consecutive boxes also cover the gaps between samples
            if lo.shape[1] > 1:
                hlo = np.minimum(lo[:, :-1], lo[:, 1:])
                hhi = np.maximum(hi[:, :-1], hi[:, 1:])
            else:
                hlo, hhi = lo, hi
            disjoint = np.all(U.classify_boxes(hlo, hhi) == 0, axis=1)
            center_hit = U.points_unsafe(states)
            for i, cell in enumerate(chunk):
                if disjoint[i]:
                    continue
                tube = ReachTube(cfg.tau, lo[i], hi[i])
                sev = severity(tube) if severity is not None else None
                level_sev.append(sev)
                if center_hit[i].any():
                    if cex is None:
                        k = int(np.argmax(center_hit[i]))
                        cex = Counterexample(cell.box.center, Trace(cfg.tau, states[i], cell.box.center), k)
                    continue
                if cell.depth >= cfg.max_refine_depth:
                    unknown.append((cell.box, sev))
                    continue
                a, b = refine_cell(cell.box)
                next_level.append(_Cell(a, depth + 1))
                next_level.append(_Cell(b, depth + 1))
        log.debug("depth %d: %d cells, %d refined", depth, len(level), len(next_level))
        if cex is not None:
            # this level's cells cover everything not yet cleared
            return Verdict(Kind.UNSAFE, cex, _max_sev(level_sev, severity), processed, max_depth,
                           [u for u, _ in unknown])
        level = next_level

    if unknown:
        return Verdict(Kind.UNKNOWN, None, _max_sev([s for _, s in unknown], severity),
                       processed, max_depth, [u for u, _ in unknown])
    return Verdict(Kind.SAFE, None, None, processed, max_depth)


def _max_sev(values, severity) -> Optional[float]:
    if severity is None:
        return None
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


def train(sim: System, K: HyperRect, cfg: VerifierConfig) -> DiscrepancyFn:
    """Sample ``cfg.n_train`` initial points from K, simulate, learn."""
    points = sample_initial(K, cfg.n_train, cfg.seed)
    states = np.asarray(sim(points, cfg.tau, cfg.T), dtype=float)
    return learn_arrays(points, states, cfg.tau)


def train_and_verify(sim: System, K: HyperRect, U: UnsafeSet, cfg: VerifierConfig,
                     severity: Optional[SeverityFn] = None,
                     disc: Optional[DiscrepancyFn] = None) -> tuple[DiscrepancyFn, Verdict]:
    if disc is None:
        disc = train(sim, K, cfg)
    return disc, verify(sim, K, U, disc, cfg, severity)


class FlowSystem:
    """Wrap a batched ``x' = f(x)`` right-hand side as a black-box system."""

    def __init__(self, f: Callable[[np.ndarray], np.ndarray]):
        self.f = f

    def __call__(self, points, tau, T):
        from .simulator import integrate

        return integrate(self.f, points, tau, T)
