import json
import math
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from tcqb.cli import main


@pytest.fixture()
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv("TCQB_CACHE_DIR", str(tmp_path / "cache"))
    return CliRunner()


def read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return header, data


class TestSolve:
    def test_writes_sectors_and_manifest(self, runner, tmp_path):
        out = tmp_path / "solve"
        result = runner.invoke(
            main, ["solve", "--n-atoms", "10", "--m-max", "2", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        doc = json.loads((out / "sector_M01.json").read_text())
        roots = sorted(r[0] for b in doc["branches"] for r in b["roots"])
        assert roots == pytest.approx([-math.sqrt(10), math.sqrt(10)], abs=1e-10)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["seed"] == 0

    def test_reruns_are_byte_identical(self, runner, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            result = runner.invoke(
                main, ["solve", "--n-atoms", "10", "--m-max", "3", "--seed", "5", "--out", str(out)]
            )
            assert result.exit_code == 0
        for m in (1, 2, 3):
            name = f"sector_M{m:02d}.json"
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestEnergy:
    def test_single_photon_curve(self, runner, tmp_path):
        out = tmp_path / "e.csv"
        result = runner.invoke(
            main, ["energy", "--init", "fock:1", "--n-atoms", "10", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        header, data = read_csv(out)
        assert header == ["t", "E", "P"]
        assert data.shape == (2000, 3)
        t_peak = data[np.argmax(data[:, 1]), 0]
        assert data[:, 1].max() == pytest.approx(1.0, abs=1e-3)
        assert abs(t_peak - math.pi / (2 * math.sqrt(10))) < 5e-3
        assert data[0, 2] == 0.0  # P(0) defined as 0

    def test_coherent_state_runs(self, runner, tmp_path):
        out = tmp_path / "coh.csv"
        result = runner.invoke(
            main,
            ["energy", "--init", "coherent:6:16", "--n-atoms", "10",
             "--steps", "200", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        _, data = read_csv(out)
        assert data[:, 1].max() > 4.0  # well above half the mean photon number

    def test_distribution_file_input(self, runner, tmp_path):
        dist_path = tmp_path / "dist.json"
        dist_path.write_text(json.dumps({"probs": {"0": 0.5, "2": 0.5}}))
        out = tmp_path / "file.csv"
        result = runner.invoke(
            main,
            ["energy", "--init", f"file:{dist_path}", "--n-atoms", "10",
             "--steps", "100", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output

    def test_support_beyond_cap_exits_3(self, runner, tmp_path):
        dist_path = tmp_path / "big.json"
        dist_path.write_text(json.dumps({"probs": {"0": 0.5, "70": 0.5}}))
        result = runner.invoke(
            main,
            ["energy", "--init", f"file:{dist_path}", "--n-atoms", "10",
             "--out", str(tmp_path / "x.csv")],
        )
        assert result.exit_code == 3

    def test_power_alias(self, runner, tmp_path):
        out = tmp_path / "p.csv"
        result = runner.invoke(
            main,
            ["power", "--init", "fock:2", "--n-atoms", "10", "--steps", "50",
             "--out", str(out)],
        )
        assert result.exit_code == 0
        header, data = read_csv(out)
        assert header == ["t", "E", "P"]
        keep = data[1:]
        assert np.allclose(keep[:, 2], keep[:, 1] / keep[:, 0])


class TestOptimalAndSplit:
    def test_optimal_fractional_mean(self, runner):
        result = runner.invoke(main, ["optimal", "--mean", "2.5"])
        assert result.exit_code == 0
        assert json.loads(result.output) == {"probs": {"2": 0.5, "3": 0.5}}

    def test_split_check_worked_example(self, runner, tmp_path):
        dist_path = tmp_path / "phi.json"
        dist_path.write_text(
            json.dumps({"probs": {"0": 4 / 45, "8": 0.25, "9": 1 / 9, "10": 0.1,
                                  "12": 0.25, "15": 0.2}})
        )
        result = runner.invoke(
            main,
            ["split-check", "--dist", f"file:{dist_path}", "--n-atoms", "10", "--t", "0.3"],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert doc["groups"] == 5
        assert doc["group_probability_error"] < 1e-12
        assert doc["group_mean_error"] < 1e-12
        assert doc["delta_f"] >= -1e-9


class TestSpectrum:
    def test_writes_sector_summaries(self, runner, tmp_path):
        out = tmp_path / "spec"
        result = runner.invoke(
            main, ["spectrum", "--n-atoms", "10", "--m-max", "2", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        doc = json.loads((out / "spectrum_M02.json").read_text())
        assert doc["energies"] == pytest.approx(
            [-math.sqrt(38), 0.0, math.sqrt(38)], abs=1e-9
        )
        assert sum(c**2 for c in doc["overlaps"]) == pytest.approx(1.0, abs=1e-9)
        assert doc["series"]["offset"] == pytest.approx(1.01, abs=0.02)


class TestInequality:
    def test_ratio_bound_reports_zero_violations(self, runner):
        result = runner.invoke(
            main, ["inequality", "--which", "28", "--n-atoms", "10", "--max-m", "6"]
        )
        assert result.exit_code == 0, result.output
        assert result.output.startswith("0 violations")

    def test_derivative_ordering_reports_its_violations(self, runner, tmp_path):
        out = tmp_path / "ineq29.json"
        result = runner.invoke(
            main,
            ["inequality", "--which", "29", "--n-atoms", "10", "--max-m", "4",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        # the ordering genuinely fails late in the charging window; the
        # tool's job is to report that, not to hide it
        assert doc["violations"] > 0
        assert "worst:" in result.output


class TestEstimate:
    def test_prints_scaled_ratio(self, runner):
        result = runner.invoke(
            main, ["estimate", "--e-known", "0.5", "--m", "2", "--e-observed", "1.25"]
        )
        assert result.exit_code == 0
        assert float(result.output) == pytest.approx(5.0)

    def test_zero_reference_is_an_error(self, runner):
        result = runner.invoke(
            main, ["estimate", "--e-known", "0", "--m", "2", "--e-observed", "1"]
        )
        assert result.exit_code == 3


class TestLindbladCommand:
    def test_small_open_run(self, runner, tmp_path):
        out = tmp_path / "open.csv"
        result = runner.invoke(
            main,
            ["lindblad", "--n-atoms", "2", "--init", "fock:2", "--kappa", "0.2",
             "--gamma-phi", "0.1", "--t-end", "0.4", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        header, data = read_csv(out)
        assert header == ["t", "E", "P", "trace", "min_eig", "m_expect"]
        assert np.max(np.abs(data[:, 3] - 1.0)) < 1e-9
        manifest = json.loads((tmp_path / "open.csv.manifest.json").read_text())
        assert manifest["config"]["kappa"] == 0.2

    def test_matches_closed_energy_curve(self, runner, tmp_path):
        open_csv = tmp_path / "open.csv"
        closed_csv = tmp_path / "closed.csv"
        r1 = runner.invoke(
            main,
            ["lindblad", "--n-atoms", "4", "--init", "fock:3", "--kappa", "0",
             "--gamma-phi", "0", "--t-end", "1.0", "--out", str(open_csv)],
        )
        r2 = runner.invoke(
            main,
            ["energy", "--init", "fock:3", "--n-atoms", "4", "--t-end", "1.0",
             "--steps", "101", "--out", str(closed_csv)],
        )
        assert r1.exit_code == 0 and r2.exit_code == 0
        _, open_data = read_csv(open_csv)
        _, closed_data = read_csv(closed_csv)
        open_at = {round(t, 6): e for t, e in zip(open_data[:, 0], open_data[:, 1])}
        gaps = [
            abs(e - open_at[round(t, 6)])
            for t, e in zip(closed_data[:, 0], closed_data[:, 1])
            if round(t, 6) in open_at
        ]
        assert gaps and max(gaps) < 1e-4


class TestVerify:
    def test_fresh_pipeline_passes(self, runner):
        result = runner.invoke(main, ["verify", "--n-atoms", "10", "--m-max", "2"])
        assert result.exit_code == 0, result.output
        assert "all invariants pass" in result.output

    def test_trivial_m0(self, runner):
        result = runner.invoke(main, ["verify", "--n-atoms", "10", "--m-max", "0"])
        assert result.exit_code == 0

    def test_corrupted_branch_file_fails(self, runner, tmp_path):
        out = tmp_path / "solve"
        assert runner.invoke(
            main, ["solve", "--n-atoms", "10", "--m-max", "2", "--out", str(out)]
        ).exit_code == 0
        doc = json.loads((out / "sector_M02.json").read_text())
        doc["branches"][0]["roots"][0][0] += 0.05  # corrupt one root
        (out / "sector_M02.json").write_text(json.dumps(doc))
        result = runner.invoke(
            main, ["verify", "--n-atoms", "10", "--m-max", "2", "--dir", str(out)]
        )
        assert result.exit_code == 4
        assert "FAIL" in result.output


class TestConfigFile:
    def test_config_supplies_defaults(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"optimal": {"mean": 2.5}}))
        result = runner.invoke(main, ["--config", str(cfg), "optimal"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["probs"] == {"2": 0.5, "3": 0.5}

    def test_flags_override_config(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"optimal": {"mean": 2.5}}))
        result = runner.invoke(main, ["--config", str(cfg), "optimal", "--mean", "4"])
        assert json.loads(result.output)["probs"] == {"4": 1.0}


def test_energy_uses_cache_after_solve(runner, tmp_path):
    out1 = tmp_path / "run1.csv"
    out2 = tmp_path / "run2.csv"
    r1 = CliRunner().invoke(main, ["energy", "--init", "fock:2", "--n-atoms", "10",
                                   "--steps", "50", "--out", str(out1)],
                            env={"TCQB_CACHE_DIR": str(tmp_path / "cache")})
    r2 = CliRunner().invoke(main, ["energy", "--init", "fock:2", "--n-atoms", "10",
                                   "--steps", "50", "--out", str(out2)],
                            env={"TCQB_CACHE_DIR": str(tmp_path / "cache")})
    assert r1.exit_code == 0 and r2.exit_code == 0
    assert out1.read_bytes() == out2.read_bytes()
    cache_files = list((tmp_path / "cache").rglob("*.json"))
    assert cache_files, "expected spectra cached on disk"
