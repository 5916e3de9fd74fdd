"""End-to-end CLI behavior and exit codes."""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import PHI2_VIOLATING_Y, PHI2_X, acas_phi2
from scnet.cli import main
from scnet.constraints import parse_constraints, serialize_constraints
from scnet.harness import read_logits_csv, write_logits_csv
from scnet.synth import dataset_from_csv


@pytest.fixture
def phi2_files(tmp_path):
    cpath = tmp_path / "phi2.json"
    cpath.write_bytes(serialize_constraints(acas_phi2()))
    xs = np.array([PHI2_X, [0.0] * 5])
    ys = np.array([PHI2_VIOLATING_Y, PHI2_VIOLATING_Y])
    dpath = tmp_path / "logits.csv"
    dpath.write_text(write_logits_csv(xs, ys))
    return cpath, dpath


class TestCheck:
    def test_violations_exit_one(self, phi2_files, capsys):
        cpath, dpath = phi2_files
        code = main(["check", "--constraints", str(cpath), "--in", str(dpath)])
        assert code == 1
        assert "violation rate: 0.5" in capsys.readouterr().out

    def test_all_safe_exit_zero(self, tmp_path, capsys):
        cpath = tmp_path / "phi2.json"
        cpath.write_bytes(serialize_constraints(acas_phi2()))
        dpath = tmp_path / "safe.csv"
        dpath.write_text(
            write_logits_csv(
                np.array([[0.0] * 5]), np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
            )
        )
        assert main(["check", "--constraints", str(cpath), "--in", str(dpath)]) == 0

    def test_json_report(self, phi2_files, capsys):
        cpath, dpath = phi2_files
        main(["check", "--constraints", str(cpath), "--in", str(dpath),
              "--report", "json"])
        doc = json.loads(capsys.readouterr().out)
        assert doc["violations"] == 1 and doc["violating_rows"] == [1]

    def test_parse_error_exit_two(self, tmp_path, phi2_files):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        _, dpath = phi2_files
        assert main(["check", "--constraints", str(bad), "--in", str(dpath)]) == 2

    def test_missing_file_exit_two(self, phi2_files):
        cpath, _ = phi2_files
        assert main(["check", "--constraints", str(cpath), "--in", "/nope.csv"]) == 2


class TestRepair:
    def test_repairs_and_recheck_passes(self, phi2_files, tmp_path, capsys):
        cpath, dpath = phi2_files
        out = tmp_path / "fixed.csv"
        assert main([
            "repair", "--constraints", str(cpath),
            "--in", str(dpath), "--out", str(out),
        ]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].endswith(",abstain")
        stripped = "\n".join(l.rsplit(",", 1)[0] for l in lines) + "\n"
        relog = tmp_path / "recheck.csv"
        relog.write_text(stripped)
        assert main(["check", "--constraints", str(cpath), "--in", str(relog)]) == 0

    def test_budget_exit_three(self, tmp_path):
        doc = {
            "n": 1,
            "m": 3,
            "constraints": [
                {"name": "a", "pre": [], "post": {"or": [{"lt": [0, 1]}] * 8}},
                {"name": "b", "pre": [], "post": {"or": [{"lt": [1, 0]}] * 8}},
            ],
        }
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(doc))
        dpath = tmp_path / "d.csv"
        dpath.write_text(
            write_logits_csv(np.array([[0.0]]), np.array([[1.0, 2.0, 3.0]]))
        )
        out = tmp_path / "o.csv"
        code = main([
            "repair", "--constraints", str(cpath), "--in", str(dpath),
            "--out", str(out), "--budget", "4",
        ])
        assert code == 3

    def test_no_fastpath_flag(self, tmp_path):
        doc = {
            "n": 1,
            "m": 3,
            "constraints": [
                {"name": "nm0", "pre": [],
                 "post": {"or": [{"lt": [0, 1]}, {"lt": [0, 2]}]}},
            ],
        }
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(doc))
        dpath = tmp_path / "d.csv"
        dpath.write_text(
            write_logits_csv(np.array([[0.0]]), np.array([[3.0, 1.0, 2.0]]))
        )
        out = tmp_path / "o.csv"
        for flag in ([], ["--no-fastpath"]):
            assert main([
                "repair", "--constraints", str(cpath), "--in", str(dpath),
                "--out", str(out), *flag,
            ]) == 0


class TestSynth:
    def test_round_trip_and_determinism(self, tmp_path):
        c1, d1 = tmp_path / "c1.json", tmp_path / "d1.csv"
        c2, d2 = tmp_path / "c2.json", tmp_path / "d2.csv"
        args = ["synth", "--m", "2", "--gamma", "1", "--alpha", "2",
                "--beta", "1", "--points", "30", "--seed", "11"]
        assert main(args + ["--out-constraints", str(c1), "--out-data", str(d1)]) == 0
        assert main(args + ["--out-constraints", str(c2), "--out-data", str(d2)]) == 0
        assert c1.read_bytes() == c2.read_bytes()
        assert d1.read_bytes() == d2.read_bytes()
        cs = parse_constraints(c1.read_bytes())
        assert cs.m == 2 and len(cs.constraints) == 2
        assert len(dataset_from_csv(d1.read_text())) == 60

    def test_default_flags_give_four_constraints(self, tmp_path):
        c, d = tmp_path / "c.json", tmp_path / "d.csv"
        assert main([
            "synth", "--points", "40",
            "--out-constraints", str(c), "--out-data", str(d),
        ]) == 0
        assert len(parse_constraints(c.read_bytes()).constraints) == 4


class TestOracle:
    def test_reports_satisfiable_constraints(self, phi2_files, capsys):
        cpath, _ = phi2_files
        assert main(["oracle", "--constraints", str(cpath)]) == 0
        out = capsys.readouterr().out
        assert "phi2" in out and "satisfiable=True" in out

    def test_unsatisfiable_post_exit_one(self, tmp_path):
        doc = {
            "n": 1,
            "m": 2,
            "constraints": [
                {"name": "bad", "pre": [],
                 "post": {"and": [{"lt": [0, 1]}, {"lt": [1, 0]}]}},
            ],
        }
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(doc))
        assert main(["oracle", "--constraints", str(cpath)]) == 1

    def test_scale_guard_exit_two(self, tmp_path):
        doc = {
            "n": 1,
            "m": 9,
            "constraints": [{"name": "big", "pre": [], "post": {"lt": [0, 1]}}],
        }
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(doc))
        assert main(["oracle", "--constraints", str(cpath)]) == 2


class TestBench:
    def test_single_point_smoke(self, tmp_path, capsys):
        out = tmp_path / "bench.json"
        plots = tmp_path / "plots"
        code = main([
            "bench", "--alphas", "2", "--betas", "2", "--ms", "4",
            "--deltas", "1", "--batch", "8", "--trials", "1",
            "--out", str(out), "--plots", str(plots), "--report", "json",
        ])
        assert code == 0
        rows = json.loads(out.read_text())
        assert len(rows) == 4  # one point per sweep
        assert all(r["overhead_ms"] >= 0 for r in rows)
        svgs = sorted(p.name for p in plots.glob("*.svg"))
        assert svgs == [
            "overhead_alpha.svg", "overhead_beta.svg",
            "overhead_delta.svg", "overhead_m.svg",
        ]
