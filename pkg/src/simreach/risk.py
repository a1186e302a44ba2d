"""Risk quantification over a gap x reaction-time grid.

Each grid cell gets a verdict and a worst-case closing speed from the
verifier and a probability mass from the gap and reaction-time
distributions (taken as independent). The expected collision speed is
the probability-weighted sum of the cell severities.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .aeb import AebSpec, AebSystem, build_initial_set
from .verifier import Kind, Verdict, VerifierConfig, platoon_severity, train, verify

log = logging.getLogger(__name__)

_TABLE_TOL = 1e-9


def skew_normal_pdf(x: float, loc: float, scale: float, shape: float) -> float:
    z = (x - loc) / scale
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    Phi = 0.5 * math.erfc(-shape * z / math.sqrt(2.0))
    return 2.0 / scale * phi * Phi


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, max_depth)


@dataclass(frozen=True)
class ParamDistribution:
    """Either a skew-normal density truncated to ``support`` or an explicit table.

    Table rows are ``(lo, hi, probability)`` and must sum to one.
    """

    kind: str
    loc: float = 0.0
    scale: float = 1.0
    shape: float = 0.0
    support: tuple[float, float] = (0.0, 1.0)
    rows: tuple[tuple[float, float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind == "skew_normal":
            if not self.scale > 0:
                raise ValueError(f"scale must be positive, got {self.scale}")
            lo, hi = self.support
            if not lo < hi:
                raise ValueError(f"support {self.support} is empty")
        elif self.kind == "table":
            rows = tuple((float(a), float(b), float(p)) for a, b, p in self.rows)
            object.__setattr__(self, "rows", rows)
            if not rows:
                raise ValueError("probability table is empty")
            if any(p < 0 for _, _, p in rows):
                raise ValueError("table probabilities must be non-negative")
            total = sum(p for _, _, p in rows)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"table probabilities sum to {total}, not 1")
            object.__setattr__(self, "support", (min(r[0] for r in rows), max(r[1] for r in rows)))
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def skew_normal(cls, loc, scale, shape, support) -> ParamDistribution:
        return cls("skew_normal", float(loc), float(scale), float(shape),
                   (float(support[0]), float(support[1])))

    @classmethod
    def table(cls, rows) -> ParamDistribution:
        return cls("table", rows=tuple(tuple(r) for r in rows))

    def to_dict(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "rows": [list(r) for r in self.rows]}
        return {"kind": "skew_normal", "loc": self.loc, "scale": self.scale,
                "shape": self.shape, "support": list(self.support)}

    @classmethod
    def from_dict(cls, d) -> ParamDistribution:
        if d.get("kind") == "table":
            return cls.table(d["rows"])
        if d.get("kind") == "skew_normal":
            return cls.skew_normal(d["loc"], d["scale"], d["shape"], d["support"])
        raise ValueError(f"unknown distribution kind {d.get('kind')!r}")

    def _mass(self, a: float, b: float) -> float:
        f = lambda x: skew_normal_pdf(x, self.loc, self.scale, self.shape)  # noqa: E731
        return adaptive_simpson(f, a, b, 1e-10)


def cell_probability(dist: ParamDistribution, interval: Sequence[float]) -> float:
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError(f"interval [{a}, {b}] is reversed")
    if dist.kind == "table":
        for lo, hi, p in dist.rows:
            if abs(lo - a) <= _TABLE_TOL and abs(hi - b) <= _TABLE_TOL:
                return p
        raise KeyError(f"interval [{a}, {b}] is not a row of the probability table")
    lo, hi = dist.support
    if a < lo - _TABLE_TOL or b > hi + _TABLE_TOL:
        raise ValueError(f"interval [{a}, {b}] leaves the support [{lo}, {hi}]")
    total = dist._mass(lo, hi)
    return dist._mass(max(a, lo), min(b, hi)) / total


def joint_probability(p_d: float, p_r: float) -> float:
    if not (0 <= p_d <= 1 and 0 <= p_r <= 1):
        raise ValueError(f"probabilities must lie in [0, 1], got {p_d}, {p_r}")
    return p_d * p_r


def partition(lo: float, hi: float, n: int) -> list[tuple[float, float]]:
    if n < 1:
        raise ValueError("need at least one interval")
    edges = [lo + (hi - lo) * i / n for i in range(n + 1)]
    edges[-1] = hi
    return list(zip(edges[:-1], edges[1:]))


@dataclass(eq=False)
class RiskGrid:
    d_cells: list[tuple[float, float]]
    r_cells: list[tuple[float, float]]
    severity: np.ndarray
    verdicts: list[list[str]]
    probability: Optional[np.ndarray] = None
    # per-cell Verdict objects and the shared discrepancy; not serialized
    details: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.d_cells), len(self.r_cells)

    def rows(self):
        for i, d in enumerate(self.d_cells):
            for j, r in enumerate(self.r_cells):
                p = None if self.probability is None else float(self.probability[i, j])
                yield d, r, self.verdicts[i][j], float(self.severity[i, j]), p

    def to_dict(self) -> dict:
        return {
            "d_cells": [list(c) for c in self.d_cells],
            "r_cells": [list(c) for c in self.r_cells],
            "verdicts": [list(row) for row in self.verdicts],
            "severity": self.severity.tolist(),
            "probability": None if self.probability is None else self.probability.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> RiskGrid:
        p = d.get("probability")
        return cls([tuple(c) for c in d["d_cells"]], [tuple(c) for c in d["r_cells"]],
                   np.array(d["severity"], dtype=float), [list(row) for row in d["verdicts"]],
                   None if p is None else np.array(p, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, RiskGrid):
            return NotImplemented
        same_p = (self.probability is None and other.probability is None) or (
            self.probability is not None and other.probability is not None
            and np.array_equal(self.probability, other.probability))
        return (self.d_cells == other.d_cells and self.r_cells == other.r_cells
                and np.array_equal(self.severity, other.severity)
                and self.verdicts == other.verdicts and same_p)


def expected_severity(grid: RiskGrid) -> float:
    if grid.probability is None:
        raise ValueError("grid has no probabilities")
    return float(np.sum(grid.probability * grid.severity))


def _cell_verdict(args) -> tuple[int, int, Verdict]:
    i, j, cell_spec, disc, cfg = args
    K, U, _ = build_initial_set(cell_spec)
    v = verify(AebSystem(cell_spec), K, U, disc, cfg, platoon_severity(cell_spec.n_cars, cell_spec.theta))
    return i, j, v


def build_risk_grid(spec: AebSpec, n_d: int, n_r: int, d_dist: Optional[ParamDistribution],
                    r_dist: Optional[ParamDistribution], cfg: VerifierConfig,
                    jobs: int = 1, disc=None) -> RiskGrid:
    """Verify every cell of an ``n_d x n_r`` grid over the first gap and reaction range.

    For three cars the remaining ranges are kept whole in every cell. The
    discrepancy is learned once over the full initial set. Without
    distributions the grid carries verdicts and severities only.
    """
    d_cells = partition(*spec.d_ranges[0], n_d)
    r_cells = partition(*spec.r_ranges[0], n_r)
    if disc is None:
        K, _, _ = build_initial_set(spec)
        disc = train(AebSystem(spec), K, cfg)
    tasks = []
    for i, d in enumerate(d_cells):
        for j, r in enumerate(r_cells):
            cell = spec.with_cell((d,) + spec.d_ranges[1:], (r,) + spec.r_ranges[1:])
            tasks.append((i, j, cell, disc, cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_verdict, tasks, chunksize=4))
    else:
        results = [_cell_verdict(t) for t in tasks]

    severity = np.zeros((n_d, n_r))
    verdicts = [[""] * n_r for _ in range(n_d)]
    by_cell = {}
    for i, j, v in results:
        by_cell[i, j] = v
        verdicts[i][j] = v.kind.value
        if v.kind is not Kind.SAFE:
            severity[i, j] = v.severity_bound if v.severity_bound is not None else 0.0
    probability = None
    if d_dist is not None and r_dist is not None:
        pd = [cell_probability(d_dist, d) for d in d_cells]
        pr = [cell_probability(r_dist, r) for r in r_cells]
        probability = np.array([[joint_probability(a, b) for b in pr] for a in pd])
    log.info("risk grid %dx%d: %d safe", n_d, n_r, sum(v.safe for v in by_cell.values()))
    return RiskGrid(d_cells, r_cells, severity, verdicts, probability,
                    {"disc": disc, "verdicts": by_cell})
