import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from simreach.aeb import AebSystem, build_initial_set
from simreach.cli import (HEATMAP_HEADER, ConfigError, VerdictRecord, heatmap_svg, main,
                          parse_config, point_from_dict, tool_version)
from simreach.risk import RiskGrid, build_risk_grid, expected_severity
from simreach.simulator import ScenarioPoint, separation, simulate
from simreach.verifier import platoon_severity, train_and_verify

SCENARIO = {"v0": [30, 30], "d_ranges": [[46, 48]], "r_ranges": [[0.9, 1.1]],
            "profiles": ["medium", "medium"]}
SKEW_D = {"kind": "skew_normal", "loc": 44.0, "scale": 3.0, "shape": 2.0, "support": [40, 50]}
SKEW_R = {"kind": "skew_normal", "loc": 1.0, "scale": 0.4, "shape": 3.0, "support": [0.7, 2.4]}


def write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def run(tmp_path, command, cfg, *extra, out="out"):
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(json.dumps({"scenario": SCENARIO}))
        assert cfg.verifier.n_train == 93 and cfg.scenario.theta == 2.0 and cfg.risk is None

    def test_negative_tau_exit_code(self, tmp_path, capsys):
        text = '{\n  "scenario": %s,\n  "verifier": {\n    "tau": -0.01\n  }\n}\n' % json.dumps(SCENARIO)
        path = tmp_path / "bad.json"
        path.write_text(text)
        assert main(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 64
        err = capsys.readouterr().err
        assert f"{path}:4:" in err and "verifier.tau" in err
        assert not (tmp_path / "o").exists()

    def test_unknown_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", {"scenario": dict(SCENARIO, colour="red")})
        assert code == 64 and "scenario.colour" in capsys.readouterr().err

    def test_syntax_error_line(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{\n "scenario": {\n  "v0": [30, 30],,\n }\n}\n')
        assert main(["verify", "--config", str(path)]) == 64
        assert f"{path}:3:" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["verify", "--config", str(tmp_path / "nope.json")]) == 64

    def test_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["verify"])
        assert e.value.code == 64

    @pytest.mark.parametrize("patch,where", [
        ({"scenario": dict(SCENARIO, d_ranges=[[0, 5]])}, "scenario.d_ranges"),
        ({"scenario": dict(SCENARIO, r_ranges=[[1.1, 0.9]])}, "scenario.r_ranges"),
        ({"scenario": dict(SCENARIO, profiles=["medium", "gentle"])}, "scenario.profiles"),
        ({"scenario": dict(SCENARIO, theta=0)}, "scenario.theta"),
        ({"verifier": {"delta_cover": 0}}, "verifier.delta_cover"),
        ({"verifier": {"T": 0.001}}, "verifier.T"),
        ({"verifier": {"m_train": 50, "epsilon": 0.1}}, "verifier.m_train"),
        ({"verifier": {"epsilon": 2.0}}, "verifier.epsilon"),
        ({"verifier": {"max_refine_depth": 1.5}}, "verifier.max_refine_depth"),
        ({"risk": {"n_d": 0, "n_r": 2}}, "risk.n_d"),
        ({"risk": {"n_d": 2, "n_r": 2, "d_dist": SKEW_D}}, "risk"),
        ({"risk": {"n_d": 2, "n_r": 2, "d_dist": dict(SKEW_D, support=[47, 50]), "r_dist": SKEW_R}},
         "risk.d_dist"),
        ({"outputs": 3}, "outputs"),
    ])
    def test_rejects(self, patch, where):
        raw = {"scenario": SCENARIO}
        raw.update(patch)
        with pytest.raises(ConfigError) as e:
            parse_config(json.dumps(raw))
        assert ".".join(e.value.key_path) == where

    def test_seed_override(self):
        cfg = parse_config(json.dumps({"scenario": SCENARIO, "verifier": {"seed": 1}}))
        other = cfg.with_seed(9)
        assert other.verifier.seed == 9 and other.digest() != cfg.digest()
        assert cfg.verifier.seed == 1


class TestVerify:
    def test_safe(self, tmp_path):
        code, out = run(tmp_path, "verify", {"scenario": SCENARIO})
        assert code == 0
        assert json.loads((out / "verdict.json").read_text())["kind"] == "safe"

    def test_unsafe_record(self, tmp_path):
        scen = {"v0": [30, 30], "d_ranges": [[40, 41]], "r_ranges": [[2.3, 2.4]],
                "profiles": ["hard", "medium"]}
        code, out = run(tmp_path, "verify", {"scenario": scen})
        assert code == 1
        rec = json.loads((out / "verdict.json").read_text())
        cex = rec["counterexample"]
        assert rec["kind"] == "unsafe" and rec["severity_bound"] > 0
        point = point_from_dict(cex["scenario_point"])
        assert point.initial_state().tolist() == cex["initial_state"]
        assert separation(simulate(point), (0, 1))[cex["time_index"]] <= 2.0

    def test_unknown(self, tmp_path):
        scen = {"v0": [30, 30], "d_ranges": [[41, 42]], "r_ranges": [[1.2, 1.3]]}
        code, out = run(tmp_path, "verify", {"scenario": scen, "verifier": {"max_refine_depth": 2}})
        assert code == 2
        rec = json.loads((out / "verdict.json").read_text())
        assert rec["kind"] == "unknown" and rec["unknown_cells"] and rec["severity_bound"] > 0

    def test_record_round_trip(self, tmp_path):
        raw = {"scenario": SCENARIO, "verifier": {"seed": 4}}
        code, out = run(tmp_path, "verify", raw)
        cfg = parse_config(json.dumps(raw))
        K, U, _ = build_initial_set(cfg.scenario)
        disc, v = train_and_verify(AebSystem(cfg.scenario), K, U, cfg.verifier, platoon_severity(2, 2.0))
        loaded = VerdictRecord.from_dict(json.loads((out / "verdict.json").read_text()))
        assert loaded == VerdictRecord.from_verdict(v, cfg.scenario, disc)

    def test_manifest(self, tmp_path):
        raw = {"scenario": SCENARIO}
        _, out_a = run(tmp_path, "verify", raw, out="a")
        _, out_b = run(tmp_path, "verify", raw, "--seed", "7", out="b")
        ma = json.loads((out_a / "manifest.json").read_text())
        mb = json.loads((out_b / "manifest.json").read_text())
        assert ma["version"] == tool_version() and ma["seed"] == 0 and mb["seed"] == 7
        assert ma["config_sha256"] != mb["config_sha256"]
        digest = hashlib.sha256((out_a / "verdict.json").read_bytes()).hexdigest()
        assert ma["outputs"] == {"verdict.json": digest}
        _, out_c = run(tmp_path, "verify", raw, out="c")
        assert (out_c / "manifest.json").read_bytes() == (out_a / "manifest.json").read_bytes()


class TestRisk:
    def test_single_cell(self, tmp_path):
        raw = {"scenario": {"v0": [30, 30], "d_ranges": [[40, 41]], "r_ranges": [[2.3, 2.4]]},
               "risk": {"n_d": 1, "n_r": 1,
                        "d_dist": {"kind": "table", "rows": [[40, 41, 1.0]]},
                        "r_dist": {"kind": "table", "rows": [[2.3, 2.4, 1.0]]}}}
        code, out = run(tmp_path, "risk", raw)
        assert code == 0
        rows = read_csv(out / "heatmap.csv")
        assert rows[0] == HEATMAP_HEADER and len(rows) == 2
        summary = json.loads((out / "summary.json").read_text())
        sev, p = float(rows[1][5]), float(rows[1][6])
        assert summary["expected_severity_mps"] == pytest.approx(sev * p, abs=1e-6)
        assert rows[1][4] == "unsafe" and sev > 0

    def test_table_must_match_partition(self, tmp_path, capsys):
        raw = {"scenario": {"v0": [30, 30], "d_ranges": [[40, 42]], "r_ranges": [[1.0, 1.1]]},
               "risk": {"n_d": 1, "n_r": 1,
                        "d_dist": {"kind": "table", "rows": [[40, 41, 0.5], [41, 42, 0.5]]},
                        "r_dist": {"kind": "table", "rows": [[1.0, 1.1, 1.0]]}}}
        code, _ = run(tmp_path, "risk", raw)
        assert code == 64 and "risk.d_dist" in capsys.readouterr().err

    def test_needs_distributions(self, tmp_path):
        raw = {"scenario": SCENARIO, "risk": {"n_d": 1, "n_r": 1}}
        assert run(tmp_path, "risk", raw)[0] == 64

    def test_grid_round_trip(self, tmp_path):
        raw = {"scenario": {"v0": [30, 30], "d_ranges": [[42, 46]], "r_ranges": [[1.0, 1.6]]},
               "risk": {"n_d": 2, "n_r": 3, "d_dist": SKEW_D, "r_dist": SKEW_R}}
        code, out = run(tmp_path, "risk", raw)
        assert code == 0
        cfg = parse_config(json.dumps(raw))
        grid = build_risk_grid(cfg.scenario, 2, 3, cfg.risk.d_dist, cfg.risk.r_dist, cfg.verifier)
        loaded = RiskGrid.from_dict(json.loads((out / "grid.json").read_text()))
        assert loaded == grid
        summary = json.loads((out / "summary.json").read_text())
        assert summary["expected_severity_mps"] == expected_severity(grid)
        rows = read_csv(out / "heatmap.csv")[1:]
        assert len(rows) == 6
        assert all(len(r[6].split(".")[1]) == 6 for r in rows)

    def test_sweep_leaves_probability_blank(self, tmp_path):
        raw = {"scenario": {"v0": [30, 30], "d_ranges": [[44, 46]], "r_ranges": [[1.0, 1.2]]},
               "risk": {"n_d": 2, "n_r": 2}}
        code, out = run(tmp_path, "sweep", raw)
        assert code == 0
        rows = read_csv(out / "heatmap.csv")
        assert rows[0] == HEATMAP_HEADER and all(r[6] == "" for r in rows[1:])
        assert (out / "heatmap.svg").exists() and not (out / "summary.json").exists()


class TestSvg:
    def grid(self):
        return RiskGrid([(40, 41), (41, 42)], [(1.0, 1.1)], np.array([[0.0], [10.0]]),
                        [["safe"], ["unsafe"]])

    def test_colors_and_labels(self):
        svg = heatmap_svg(self.grid(), severity_cap=20.0)
        assert svg.count("<rect") == 2
        assert 'fill="#2e9e4f"' in svg
        # half the cap gives half-faded red
        assert 'fill="#ff8080"' in svg
        assert ">10.0<" in svg and ">0.0<" in svg

    def test_capped(self):
        g = self.grid()
        g.severity[1, 0] = 99.0
        assert 'fill="#ff0000"' in heatmap_svg(g, severity_cap=20.0)

    def test_deterministic(self):
        assert heatmap_svg(self.grid()) == heatmap_svg(self.grid())


class TestSimulate:
    def test_braking_point(self, tmp_path):
        raw = {"scenario": {"v0": [30, 30], "d_ranges": [[40, 50]], "r_ranges": [[1.0, 2.0]]}}
        code, out = run(tmp_path, "simulate", raw, "--d", "42", "--r", "1.5")
        assert code == 0
        rows = read_csv(out / "trace.csv")
        assert rows[0] == ["t", "s1", "v1", "s2", "v2", "sep12"]
        data = np.array(rows[1:], dtype=float)
        t, v1, v2 = data[:, 0], data[:, 2], data[:, 4]
        assert np.all(np.diff(v1) <= 0)
        # the follower cruises until its reaction time, then slows monotonically
        assert np.all(v2[t <= 1.5] == 30.0)
        assert np.all(np.diff(v2[t >= 1.5]) <= 0)
        tr = simulate(ScenarioPoint((30, 30), (42.0,), (1.5,)))
        np.testing.assert_allclose(data[:, 5], separation(tr, (0, 1)), atol=5e-7)

    def test_standing_point_is_constant(self, tmp_path):
        raw = {"scenario": {"v0": [0, 0], "d_ranges": [[40, 50]], "r_ranges": [[1.0, 2.0]]},
               "verifier": {"T": 2.0}}
        code, out = run(tmp_path, "simulate", raw)
        data = np.array(read_csv(out / "trace.csv")[1:], dtype=float)
        assert code == 0 and np.all(data[:, [2, 4]] == 0) and np.all(data[:, 5] == 45.0)

    def test_three_cars(self, tmp_path):
        raw = {"scenario": {"v0": [22, 22, 22], "d_ranges": [[40, 50], [44, 45]],
                            "r_ranges": [[1.8, 1.9], [1.8, 1.9]]}}
        code, out = run(tmp_path, "simulate", raw)
        header = read_csv(out / "trace.csv")[0]
        assert code == 0 and header == ["t", "s1", "v1", "s2", "v2", "s3", "v3", "sep12", "sep23"]

    def test_bad_point(self, tmp_path):
        raw = {"scenario": SCENARIO}
        assert run(tmp_path, "simulate", raw, "--d", "-3")[0] == 64


def test_module_entry_point(tmp_path):
    path = write(tmp_path, {"scenario": SCENARIO})
    res = subprocess.run([sys.executable, "-m", "simreach", "verify", "--config", path,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
