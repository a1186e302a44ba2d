"""Command line entry point: ``simreach {verify,risk,sweep,simulate}``.

Every command reads one JSON run configuration, writes its results to an
output directory and finishes with a ``manifest.json`` holding the config
hash, seed, tool version and a digest of every file written.

Exit codes: 0 safe (or completed), 1 unsafe, 2 unknown, 3 runtime error,
64 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .aeb import AebSpec, AebSystem, build_initial_set
from .discrepancy import PacParams
from .risk import (ParamDistribution, RiskGrid, build_risk_grid, cell_probability,
                   expected_severity, partition)
from .simulator import BrakingProfile, ScenarioPoint, separation, simulate
from .verifier import Kind, Verdict, VerifierConfig, platoon_severity, train_and_verify

log = logging.getLogger("simreach")

EXIT_SAFE, EXIT_UNSAFE, EXIT_UNKNOWN, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2, 3, 64
_EXIT_FOR_KIND = {Kind.SAFE: EXIT_SAFE, Kind.UNSAFE: EXIT_UNSAFE, Kind.UNKNOWN: EXIT_UNKNOWN}

HEATMAP_HEADER = ["d_lo", "d_hi", "r_lo", "r_hi", "verdict", "severity_mps", "probability"]
DEFAULT_SEVERITY_CAP = 20.0


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# -- configuration -----------------------------------------------------------

class ConfigError(ValueError):
    """Invalid run configuration; ``key_path`` locates the offending entry."""

    def __init__(self, message: str, key_path: Sequence[str] = (), line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.key_path = tuple(key_path)
        self.line = line

    def render(self, source: str, text: str) -> str:
        line = self.line if self.line is not None else _line_of(text, self.key_path)
        where = ".".join(self.key_path)
        prefix = f"{source}:{line}: " if line else f"{source}: "
        return prefix + (f"{where}: " if where else "") + self.message


def _line_of(text: str, key_path: Sequence[str]) -> Optional[int]:
    """Best-effort line of the last key in ``key_path`` (searched in nesting order)."""
    pos, found = 0, None
    for key in key_path:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos, found = m.end(), m.start()
    return None if found is None else text.count("\n", 0, found) + 1


_TOP_KEYS = {"scenario", "verifier", "risk", "outputs"}
_SCENARIO_KEYS = {"v0", "d_ranges", "r_ranges", "profiles", "theta"}
_VERIFIER_KEYS = {"delta_cover", "max_refine_depth", "tau", "T", "seed", "m_train",
                  "epsilon", "confidence_delta"}
_RISK_KEYS = {"n_d", "n_r", "d_dist", "r_dist", "severity_cap"}


@dataclass(frozen=True)
class RiskSection:
    n_d: int
    n_r: int
    d_dist: Optional[ParamDistribution] = None
    r_dist: Optional[ParamDistribution] = None
    severity_cap: float = DEFAULT_SEVERITY_CAP


@dataclass(frozen=True)
class RunConfig:
    scenario: AebSpec
    verifier: VerifierConfig
    risk: Optional[RiskSection] = None
    outputs: str = "out"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_seed(self, seed: int) -> RunConfig:
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("verifier", {})["seed"] = seed
        return replace(self, verifier=replace(self.verifier, seed=seed), raw=raw)

    def digest(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _check_keys(obj: Any, allowed: set, path: tuple) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", path + (key,))
    return obj


def _num(obj: dict, key: str, path: tuple, *, default=None, positive=False,
         nonneg=False, integer=False):
    if key not in obj:
        if default is None:
            raise ConfigError("missing required key", path + (key,))
        return default
    val = obj[key]
    kind = int if integer else (int, float)
    if isinstance(val, bool) or not isinstance(val, kind):
        raise ConfigError(f"expected {'an integer' if integer else 'a number'}, got {val!r}", path + (key,))
    if not np.isfinite(val):
        raise ConfigError("must be finite", path + (key,))
    if positive and not val > 0:
        raise ConfigError(f"must be positive, got {val}", path + (key,))
    if nonneg and val < 0:
        raise ConfigError(f"must be non-negative, got {val}", path + (key,))
    return val


def _ranges(obj: dict, key: str, path: tuple, *, positive: bool) -> list[tuple[float, float]]:
    p = path + (key,)
    val = obj.get(key)
    if not isinstance(val, list) or not val:
        raise ConfigError("expected a non-empty list of [lo, hi] intervals", p)
    out = []
    for iv in val:
        if (not isinstance(iv, list) or len(iv) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in iv)):
            raise ConfigError(f"interval {iv!r} is not a pair of numbers", p)
        lo, hi = iv
        if lo > hi:
            raise ConfigError(f"interval [{lo}, {hi}] is reversed", p)
        if positive and lo <= 0:
            raise ConfigError(f"interval [{lo}, {hi}] must be strictly positive", p)
        if not positive and lo < 0:
            raise ConfigError(f"interval [{lo}, {hi}] must be non-negative", p)
        out.append((float(lo), float(hi)))
    return out


def _profile(val: Any, path: tuple) -> BrakingProfile:
    try:
        if isinstance(val, dict):
            _check_keys(val, {"preset", "ramp_s", "peak_decel"}, path)
        elif not isinstance(val, str):
            raise ConfigError("expected a preset name or {ramp_s, peak_decel}", path)
        return BrakingProfile.from_dict(val)
    except KeyError as e:
        raise ConfigError(f"missing key {e}", path) from None
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), path) from None


def _scenario(obj: Any) -> AebSpec:
    path = ("scenario",)
    _check_keys(obj, _SCENARIO_KEYS, path)
    v0 = obj.get("v0")
    if not isinstance(v0, list) or len(v0) not in (2, 3):
        raise ConfigError("expected a list of 2 or 3 velocities", path + ("v0",))
    for v in v0:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(f"velocity {v!r} must be a non-negative number", path + ("v0",))
    n = len(v0)
    d = _ranges(obj, "d_ranges", path, positive=True)
    r = _ranges(obj, "r_ranges", path, positive=False)
    if len(d) != n - 1:
        raise ConfigError(f"need {n - 1} gap ranges for {n} cars", path + ("d_ranges",))
    if len(r) != n - 1:
        raise ConfigError(f"need {n - 1} reaction ranges for {n} cars", path + ("r_ranges",))
    raw_profiles = obj.get("profiles", ["medium"] * n)
    if not isinstance(raw_profiles, list) or len(raw_profiles) != n:
        raise ConfigError(f"need {n} braking profiles", path + ("profiles",))
    profiles = [_profile(p, path + ("profiles",)) for p in raw_profiles]
    theta = _num(obj, "theta", path, default=2.0, positive=True)
    return AebSpec(tuple(v0), tuple(d), tuple(r), tuple(profiles), float(theta))


def _verifier(obj: Any) -> VerifierConfig:
    path = ("verifier",)
    _check_keys(obj, _VERIFIER_KEYS, path)
    defaults = VerifierConfig()
    m_train = obj.get("m_train")
    pac = None
    if m_train is not None:
        m_train = _num(obj, "m_train", path, integer=True)
        if m_train < 2:
            raise ConfigError("must be at least 2", path + ("m_train",))
        if "epsilon" in obj or "confidence_delta" in obj:
            raise ConfigError("give either m_train or epsilon/confidence_delta, not both",
                              path + ("m_train",))
    else:
        eps = _num(obj, "epsilon", path, default=defaults.pac.epsilon, positive=True)
        conf = _num(obj, "confidence_delta", path, default=defaults.pac.confidence_delta, positive=True)
        if eps > 1:
            raise ConfigError("must be in (0, 1]", path + ("epsilon",))
        if conf >= 1:
            raise ConfigError("must be in (0, 1)", path + ("confidence_delta",))
        pac = PacParams(float(eps), float(conf))
    tau = _num(obj, "tau", path, default=defaults.tau, positive=True)
    T = _num(obj, "T", path, default=defaults.T, positive=True)
    if T < tau:
        raise ConfigError(f"horizon {T} is shorter than tau {tau}", path + ("T",))
    return VerifierConfig(
        delta_cover=float(_num(obj, "delta_cover", path, default=defaults.delta_cover, positive=True)),
        max_refine_depth=_num(obj, "max_refine_depth", path, default=defaults.max_refine_depth,
                              integer=True, nonneg=True),
        tau=float(tau), T=float(T), m_train=m_train, pac=pac,
        seed=_num(obj, "seed", path, default=defaults.seed, integer=True, nonneg=True),
    )


def _distribution(val: Any, path: tuple) -> ParamDistribution:
    if not isinstance(val, dict):
        raise ConfigError("expected a distribution object", path)
    kind = val.get("kind")
    if kind == "table":
        _check_keys(val, {"kind", "rows"}, path)
    elif kind == "skew_normal":
        _check_keys(val, {"kind", "loc", "scale", "shape", "support"}, path)
    else:
        raise ConfigError(f"kind must be 'table' or 'skew_normal', got {kind!r}", path + ("kind",))
    try:
        return ParamDistribution.from_dict(val)
    except KeyError as e:
        raise ConfigError(f"missing key {e}", path) from None
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), path) from None


def _risk(obj: Any, spec: AebSpec) -> RiskSection:
    path = ("risk",)
    _check_keys(obj, _RISK_KEYS, path)
    n_d = _num(obj, "n_d", path, integer=True, positive=True)
    n_r = _num(obj, "n_r", path, integer=True, positive=True)
    dists = {}
    for key, rng in (("d_dist", spec.d_ranges[0]), ("r_dist", spec.r_ranges[0])):
        if key not in obj:
            continue
        dist = _distribution(obj[key], path + (key,))
        lo, hi = dist.support
        if rng[0] < lo - 1e-9 or rng[1] > hi + 1e-9:
            raise ConfigError(f"support [{lo}, {hi}] does not cover the scenario range {list(rng)}",
                              path + (key,))
        dists[key] = dist
    if ("d_dist" in dists) != ("r_dist" in dists):
        raise ConfigError("give both d_dist and r_dist or neither", path)
    cap = _num(obj, "severity_cap", path, default=DEFAULT_SEVERITY_CAP, positive=True)
    return RiskSection(n_d, n_r, dists.get("d_dist"), dists.get("r_dist"), float(cap))


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno) from None
    _check_keys(raw, _TOP_KEYS, ())
    if "scenario" not in raw:
        raise ConfigError("missing required section", ("scenario",))
    spec = _scenario(raw["scenario"])
    cfg = _verifier(raw.get("verifier", {}))
    risk = _risk(raw["risk"], spec) if raw.get("risk") is not None else None
    outputs = raw.get("outputs", "out")
    if not isinstance(outputs, str) or not outputs:
        raise ConfigError("expected a directory path", ("outputs",))
    return RunConfig(spec, cfg, risk, outputs, raw)


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


# -- verdict records ---------------------------------------------------------

def point_to_dict(point: ScenarioPoint) -> dict:
    return {"v0": list(point.v0), "d": list(point.d), "r": list(point.r),
            "profiles": [p.to_dict() for p in point.profiles]}


def point_from_dict(d: dict) -> ScenarioPoint:
    return ScenarioPoint(tuple(d["v0"]), tuple(d["d"]), tuple(d["r"]),
                         tuple(BrakingProfile.from_dict(p) for p in d["profiles"]))


@dataclass
class VerdictRecord:
    """Serializable summary of one verification run."""

    kind: str
    severity_bound: Optional[float]
    cells_processed: int
    max_depth_reached: int
    unknown_cells: list
    discrepancy: dict
    counterexample: Optional[dict] = None

    @classmethod
    def from_verdict(cls, verdict: Verdict, spec: AebSpec, disc) -> VerdictRecord:
        cex = None
        if verdict.counterexample is not None:
            c = verdict.counterexample
            cex = {
                "initial_state": c.trace.states[0].tolist(),
                "coords": c.origin.tolist(),
                "scenario_point": point_to_dict(spec.point_from_coords(c.origin)),
                "time_index": c.time_index,
                "time": c.time,
            }
        return cls(
            kind=verdict.kind.value,
            severity_bound=verdict.severity_bound,
            cells_processed=verdict.cells_processed,
            max_depth_reached=verdict.max_depth_reached,
            unknown_cells=[[list(iv) for iv in box.intervals()] for box in verdict.unknown_cells],
            discrepancy=disc.to_dict(),
            counterexample=cex,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> VerdictRecord:
        return cls(**d)


# -- emitters ----------------------------------------------------------------

def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def heatmap_csv(grid: RiskGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEATMAP_HEADER)
    for (d_lo, d_hi), (r_lo, r_hi), verdict, sev, p in grid.rows():
        w.writerow([_fmt(d_lo), _fmt(d_hi), _fmt(r_lo), _fmt(r_hi), verdict, _fmt(sev),
                    "" if p is None else _fmt(p)])
    return buf.getvalue()


def _cell_fill(verdict: str, severity: float, cap: float) -> str:
    if verdict == Kind.SAFE.value:
        return "#2e9e4f"
    t = min(max(severity / cap, 0.0), 1.0)
    fade = round(255 * (1.0 - t))
    return f"#ff{fade:02x}{fade:02x}"


def heatmap_svg(grid: RiskGrid, severity_cap: float = DEFAULT_SEVERITY_CAP,
                cell_w: int = 56, cell_h: int = 26) -> str:
    """Gap along x, reaction time along y (growing upwards)."""
    n_d, n_r = grid.shape
    left, top, bottom = 60, 30, 40
    width, height = left + n_d * cell_w + 10, top + n_r * cell_h + bottom
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{left}" y="18">worst-case closing speed (m/s), cap {severity_cap:g}</text>']
    for i, (d_lo, d_hi) in enumerate(grid.d_cells):
        for j, (r_lo, r_hi) in enumerate(grid.r_cells):
            x, y = left + i * cell_w, top + (n_r - 1 - j) * cell_h
            verdict, sev = grid.verdicts[i][j], float(grid.severity[i, j])
            dash = ' stroke-dasharray="3,2"' if verdict == Kind.UNKNOWN.value else ""
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                       f'fill="{_cell_fill(verdict, sev, severity_cap)}" stroke="#333"{dash}/>')
            out.append(f'<text x="{x + cell_w / 2:g}" y="{y + cell_h / 2 + 4:g}" '
                       f'text-anchor="middle">{sev:.1f}</text>')
    base = top + n_r * cell_h
    for i, (d_lo, _) in enumerate(grid.d_cells):
        out.append(f'<text x="{left + i * cell_w:g}" y="{base + 14}" text-anchor="middle">{d_lo:g}</text>')
    out.append(f'<text x="{left + n_d * cell_w:g}" y="{base + 14}" text-anchor="middle">'
               f'{grid.d_cells[-1][1]:g}</text>')
    out.append(f'<text x="{left + n_d * cell_w / 2:g}" y="{base + 32}" text-anchor="middle">d (m)</text>')
    for j, (r_lo, _) in enumerate(grid.r_cells):
        out.append(f'<text x="{left - 4}" y="{top + (n_r - j) * cell_h:g}" text-anchor="end">{r_lo:g}</text>')
    out.append(f'<text x="{left - 4}" y="{top + 4}" text-anchor="end">{grid.r_cells[-1][1]:g}</text>')
    out.append(f'<text x="12" y="{top + n_r * cell_h / 2:g}" '
               f'transform="rotate(-90 12 {top + n_r * cell_h / 2:g})" text-anchor="middle">r (s)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_csv(point: ScenarioPoint, tau: float, T: float) -> str:
    trace = simulate(point, tau, T)
    lay = point.layout
    n = point.n_cars
    pairs = [(i, i + 1) for i in range(n - 1)]
    seps = [separation(trace, p) for p in pairs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"{k}{i + 1}" for i in range(n) for k in ("s", "v")]
               + [f"sep{a + 1}{b + 1}" for a, b in pairs])
    for k, t in enumerate(trace.times):
        row = [t]
        for i in range(n):
            row += [trace.states[k, lay.s(i)], trace.states[k, lay.v(i)]]
        row += [s[k] for s in seps]
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


class _Outputs:
    """Collects output files and writes them, plus a manifest, at the end of a run."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def add_json(self, name: str, obj: Any):
        self.add(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write(self, command: str, cfg: RunConfig):
        self.directory.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name, text in sorted(self.files.items()):
            (self.directory / name).write_text(text)
            digests[name] = hashlib.sha256(text.encode()).hexdigest()
        manifest = {"tool": "simreach", "version": tool_version(), "command": command,
                    "config_sha256": cfg.digest(), "seed": cfg.verifier.seed, "outputs": digests}
        (self.directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- commands ----------------------------------------------------------------

def run_verify(cfg: RunConfig, out: _Outputs, jobs: int = 1) -> int:
    spec = cfg.scenario
    K, U, _ = build_initial_set(spec)
    disc, verdict = train_and_verify(AebSystem(spec), K, U, cfg.verifier,
                                     platoon_severity(spec.n_cars, spec.theta))
    record = VerdictRecord.from_verdict(verdict, spec, disc)
    out.add_json("verdict.json", record.to_dict())
    log.info("verdict: %s (severity bound %s)", verdict.kind.value, verdict.severity_bound)
    return _EXIT_FOR_KIND[verdict.kind]


def _grid(cfg: RunConfig, jobs: int, with_probability: bool) -> RiskGrid:
    rs = cfg.risk
    if rs is None:
        raise ConfigError("missing required section", ("risk",))
    if with_probability and rs.d_dist is None:
        raise ConfigError("the risk command needs d_dist and r_dist", ("risk",))
    d_dist = rs.d_dist if with_probability else None
    r_dist = rs.r_dist if with_probability else None
    if with_probability:
        # fail before any verification if a table does not line up with the partition
        for key, dist, rng, n in (("d_dist", d_dist, cfg.scenario.d_ranges[0], rs.n_d),
                                  ("r_dist", r_dist, cfg.scenario.r_ranges[0], rs.n_r)):
            for cell in partition(*rng, n):
                try:
                    cell_probability(dist, cell)
                except (KeyError, ValueError) as e:
                    raise ConfigError(str(e).strip("'\""), ("risk", key)) from None
    return build_risk_grid(cfg.scenario, rs.n_d, rs.n_r, d_dist, r_dist, cfg.verifier, jobs)


def _emit_grid(grid: RiskGrid, cfg: RunConfig, out: _Outputs):
    out.add("heatmap.csv", heatmap_csv(grid))
    out.add("heatmap.svg", heatmap_svg(grid, cfg.risk.severity_cap))
    out.add_json("grid.json", grid.to_dict())


def run_risk(cfg: RunConfig, out: _Outputs, jobs: int = 1) -> int:
    grid = _grid(cfg, jobs, with_probability=True)
    _emit_grid(grid, cfg, out)
    counts = {k.value: sum(row.count(k.value) for row in grid.verdicts) for k in Kind}
    out.add_json("summary.json", {
        "expected_severity_mps": expected_severity(grid),
        "cells": grid.shape[0] * grid.shape[1],
        "verdict_counts": counts,
        "probability_total": float(np.sum(grid.probability)),
        "discrepancy": grid.details["disc"].to_dict(),
    })
    log.info("expected collision speed %.6f m/s", expected_severity(grid))
    return EXIT_SAFE


def run_sweep(cfg: RunConfig, out: _Outputs, jobs: int = 1) -> int:
    _emit_grid(_grid(cfg, jobs, with_probability=False), cfg, out)
    return EXIT_SAFE


def run_simulate(cfg: RunConfig, out: _Outputs, d: Optional[Sequence[float]] = None,
                 r: Optional[Sequence[float]] = None) -> int:
    spec = cfg.scenario
    d = list(d) if d else [0.5 * (a + b) for a, b in spec.d_ranges]
    r = list(r) if r else [0.5 * (a + b) for a, b in spec.r_ranges]
    try:
        point = spec.point(d, r)
    except ValueError as e:
        raise ConfigError(f"bad scenario point: {e}") from None
    out.add("trace.csv", trace_csv(point, cfg.verifier.tau, cfg.verifier.T))
    out.add_json("point.json", point_to_dict(point))
    return EXIT_SAFE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simreach", description="Simulation-driven verification of AEB scenarios.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "verify": "verify the whole initial set (exit 0 safe, 1 unsafe, 2 unknown)",
        "risk": "verify a d x r grid and weight it by probabilities",
        "sweep": "verify a d x r grid (verdicts and severities only)",
        "simulate": "simulate one scenario point and write its trace",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, help="override verifier.seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for grid commands")
        p.add_argument("--out", metavar="DIR", help="override the outputs directory")
        if name == "simulate":
            p.add_argument("--d", type=float, nargs="+", help="gaps (m), default range centers")
            p.add_argument("--r", type=float, nargs="+", help="reaction times (s), default range centers")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    text = ""
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out = _Outputs(Path(args.out or cfg.outputs))
        if args.command == "verify":
            code = run_verify(cfg, out, args.jobs)
        elif args.command == "risk":
            code = run_risk(cfg, out, args.jobs)
        elif args.command == "sweep":
            code = run_sweep(cfg, out, args.jobs)
        else:
            code = run_simulate(cfg, out, args.d, args.r)
        out.write(args.command, cfg)
        return code
    except ConfigError as e:
        print(e.render(args.config, text), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"simreach: {e}", file=sys.stderr)
        return EXIT_CONFIG if not text else EXIT_ERROR
    except Exception as e:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"simreach: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
