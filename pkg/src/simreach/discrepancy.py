"""Learning exponential discrepancy functions from simulation traces.

A discrepancy function bounds how far two trajectories can drift apart:

    |xi(x, t)[e] - xi(x', t)[e]| <= ||x - x'||_inf * c_e * exp(gamma_e * t)

for every state dimension e. Given sampled traces, each pair (i, j) and
sample time t_k maps to a point ``(t_k, log(|diff| / ||x_i - x_j||))`` in the
plane. A pair ``(c, gamma)`` is valid iff the line ``log c + gamma t`` lies
above every point. For a fixed gamma the smallest valid c is therefore

    log c(gamma) = max_k (Y_k - gamma t_k),   Y_k = max over pairs at t_k,

which turns the search for the separating line into a one dimensional
convex problem in gamma: minimize the area ``int_0^T c e^{gamma t} dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .trace_model import HyperRect, Trace, sample_times

LOG_FLOOR = 1e-12
GAMMA_MAX = 10.0
GAMMA_TOL = 1e-4
# keeps c feasible after the exp/log round trip
_C_MARGIN = 1.0 + 1e-9
_PAIR_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class DiscrepancyFn:
    c: np.ndarray
    gamma: np.ndarray
    horizon: float
    norm: str = "inf"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if c.shape != g.shape:
            raise ValueError("c and gamma need one entry per dimension")
        if np.any(c < 1):
            raise ValueError(f"discrepancy factors must be >= 1, got {c}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", g)

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def per_dim(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.c, self.gamma)]

    def growth(self, times) -> np.ndarray:
        """``c_e * exp(gamma_e t)`` for every time and dimension, (len(times), dim)."""
        t = np.asarray(times, dtype=float)[:, None]
        return self.c * np.exp(self.gamma * t)

    def bound(self, dist: float, t) -> np.ndarray:
        return dist * self.growth(np.atleast_1d(t))

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "gamma": self.gamma.tolist(),
                "horizon": self.horizon, "norm": self.norm}

    @classmethod
    def from_dict(cls, d) -> DiscrepancyFn:
        return cls(np.array(d["c"]), np.array(d["gamma"]), float(d["horizon"]), d.get("norm", "inf"))

    def __eq__(self, other):
        if not isinstance(other, DiscrepancyFn):
            return NotImplemented
        return (np.array_equal(self.c, other.c) and np.array_equal(self.gamma, other.gamma)
                and self.horizon == other.horizon and self.norm == other.norm)


def lipschitz_discrepancy(L: float, dim: int, horizon: float) -> DiscrepancyFn:
    """The classical ``||x - x'|| e^{L t}`` bound for a known Lipschitz constant."""
    return DiscrepancyFn(np.ones(dim), np.full(dim, float(L)), horizon)


@dataclass(frozen=True)
class PacParams:
    epsilon: float
    confidence_delta: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not 0 < self.confidence_delta < 1:
            raise ValueError(f"confidence delta must be in (0, 1), got {self.confidence_delta}")


def required_samples(pac: PacParams) -> int:
    """Smallest m with m >= (1/epsilon) ln(1/delta)."""
    m = math.log(1.0 / pac.confidence_delta) / pac.epsilon
    # ln(1/e^-1) can land a hair above 1.0
    return max(1, math.ceil(m - 1e-9))


def sample_initial(K: HyperRect, m: int, seed: int) -> np.ndarray:
    if m < 1:
        raise ValueError(f"need at least one sample, got {m}")
    rng = np.random.default_rng(seed)
    u = rng.random((m, K.dim))
    return K.lo + K.widths * u


def _check_traces(traces: Sequence[Trace]) -> tuple[np.ndarray, np.ndarray, float]:
    if len(traces) < 2:
        raise ValueError("discrepancy learning needs at least two traces")
    step = traces[0].step
    shape = traces[0].states.shape
    for tr in traces:
        if tr.step != step or tr.states.shape != shape:
            raise ValueError("all traces must share step, horizon and dimension")
    origins = np.stack([tr.origin for tr in traces])
    states = np.stack([tr.states for tr in traces])
    return origins, states, step


def _pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(m, k=1)


def max_log_ratios(origins: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Upper envelope ``Y[k, e]`` of the log distance ratios over all pairs.

    ``origins`` is (m, p), ``states`` is (m, N+1, dim); returns (N+1, dim).
    """
    ii, jj = _pairs(origins.shape[0])
    dist = np.max(np.abs(origins[ii] - origins[jj]), axis=1)
    if np.any(dist == 0):
        raise ValueError("traces with coincident initial states cannot be compared")
    best = np.full(states.shape[1:], -np.inf)
    for lo in range(0, ii.size, _PAIR_CHUNK):
        a, b = ii[lo:lo + _PAIR_CHUNK], jj[lo:lo + _PAIR_CHUNK]
        diff = np.maximum(np.abs(states[a] - states[b]), LOG_FLOOR)
        ratio = diff / dist[lo:lo + _PAIR_CHUNK, None, None]
        np.maximum(best, ratio.max(axis=0), out=best)
    return np.log(best)


def _log_area(gamma: float, T: float) -> float:
    """log of int_0^T e^{gamma t} dt, stable for large |gamma| T."""
    x = gamma * T
    if abs(x) < 1e-12:
        return math.log(T)
    if gamma > 0:
        return x + math.log(-math.expm1(-x)) - math.log(gamma)
    return math.log(-math.expm1(x)) - math.log(-gamma)


def _log_c(gamma: float, t: np.ndarray, y: np.ndarray) -> float:
    # the (0, 0) point encodes the t = 0 constraint c >= 1
    return max(0.0, float(np.max(y - gamma * t)))


def log_objective(gamma: float, t: np.ndarray, y: np.ndarray) -> float:
    """log J(gamma) with c chosen as the tightest feasible value."""
    return _log_c(gamma, t, y) + _log_area(gamma, float(t[-1]))


def fit_envelope(t: np.ndarray, y: np.ndarray, gamma_max: float = GAMMA_MAX,
                 tol: float = GAMMA_TOL) -> tuple[float, float]:
    """Golden-section search for the area-minimizing dominating exponential.

    The objective is convex in gamma (log c is a max of affine functions and
    the integrand is exp of a convex function), so the bracket shrinks onto
    the global minimizer.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t[-1] <= 0:
        return math.exp(_log_c(0.0, t, y)) * _C_MARGIN, 0.0
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = -gamma_max, gamma_max
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = log_objective(x1, t, y)
    f2 = log_objective(x2, t, y)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = log_objective(x1, t, y)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = log_objective(x2, t, y)
    candidates = [(f1, x1), (f2, x2), (log_objective(a, t, y), a), (log_objective(b, t, y), b)]
    _, gamma = min(candidates)
    c = math.exp(_log_c(gamma, t, y)) * _C_MARGIN
    return c, gamma


def learn(traces: Sequence[Trace], dim: int) -> tuple[float, float]:
    """Learn ``(c, gamma)`` for one state dimension."""
    origins, states, step = _check_traces(traces)
    y = max_log_ratios(origins, states[:, :, dim:dim + 1])[:, 0]
    return fit_envelope(sample_times(step, states.shape[1] - 1), y)


def learn_arrays(origins: np.ndarray, states: np.ndarray, step: float) -> DiscrepancyFn:
    y = max_log_ratios(origins, states)
    t = sample_times(step, states.shape[1] - 1)
    fits = [fit_envelope(t, y[:, e]) for e in range(states.shape[2])]
    c, g = zip(*fits)
    return DiscrepancyFn(np.array(c), np.array(g), float(t[-1]))


def learn_all(traces: Sequence[Trace]) -> DiscrepancyFn:
    origins, states, step = _check_traces(traces)
    return learn_arrays(origins, states, step)


def pair_holds(disc: DiscrepancyFn, a: Trace, b: Trace) -> bool:
    """Whether the bound holds for one pair at every sample and dimension."""
    dist = float(np.max(np.abs(a.origin - b.origin)))
    bound = dist * disc.growth(a.times)
    return bool(np.all(np.abs(a.states - b.states) <= bound))


def validate(disc: DiscrepancyFn, fresh_traces: Sequence[Trace],
             pairs: Sequence[tuple[int, int]] | None = None) -> float:
    """Fraction of trace pairs (all pairs unless given) the bound holds for."""
    if len(fresh_traces) < 2:
        raise ValueError("validation needs at least two traces")
    if pairs is None:
        ii, jj = _pairs(len(fresh_traces))
        pairs = list(zip(ii.tolist(), jj.tolist()))
    if not pairs:
        raise ValueError("no pairs to validate")
    ok = sum(pair_holds(disc, fresh_traces[i], fresh_traces[j]) for i, j in pairs)
    return ok / len(pairs)
