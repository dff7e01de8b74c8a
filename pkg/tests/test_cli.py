"""CLI tests: exit codes, CSV schemas, determinism, format mirroring."""

import json
import math
import subprocess
import sys

import pytest

from bgrf.cli import main


def write_config(tmp_path, name="cfg.json", **sections):
    base = {
        "model": {"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.4, "dim_N": 1},
    }
    base.update(sections)
    p = tmp_path / name
    p.write_text(json.dumps(base))
    return str(p)


def read_rows(path):
    lines = open(path).read().splitlines()
    assert lines[0].startswith("# config_sha256=")
    header = lines[1].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[2:]]


class TestValidate:
    def test_passing_model_exits_zero(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["validate", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_invalid_rho_exits_one(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.6, "dim_N": 1}
        )
        assert main(["validate", "--config", cfg]) == 1
        assert "validity" in capsys.readouterr().out

    def test_malformed_json_exits_two(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["validate", "--config", str(p)]) == 2

    def test_unknown_key_exits_two(self, tmp_path):
        cfg = write_config(tmp_path, extra_section={"x": 1})
        assert main(["validate", "--config", cfg]) == 2

    def test_unknown_model_key_exits_two(self, tmp_path):
        cfg = write_config(
            tmp_path,
            model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.4, "typo": 1},
        )
        assert main(["validate", "--config", cfg]) == 2


class TestMaternEval:
    def test_schema_and_agreement(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main([
            "matern-eval", "--config", cfg, "--out-dir", str(out),
            "--h-points", "6",
        ]) == 0
        rows = read_rows(out / "matern-eval.csv")
        assert len(rows) == 18  # three (nu, a) pairs x six lags
        for r in rows:
            assert float(r["abs_diff"]) <= 1e-6


class TestExpansion:
    def test_values(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["expansion", "--config", cfg, "--out-dir", str(out)]) == 0
        (row,) = read_rows(out / "expansion.csv")
        assert float(row["alpha1"]) == 1.0
        assert float(row["c1"]) == pytest.approx(1.0)
        assert float(row["r2_zero"]) == pytest.approx(0.4 * -1.0, rel=1e-9)


class TestPickands:
    def test_sequence_rows(self, tmp_path):
        cfg = write_config(
            tmp_path,
            estimation={"reps": 4000, "seed": 7, "eta": 0.0625, "T_list": [1, 2, 4]},
        )
        out = tmp_path / "out"
        assert main(["pickands", "--config", cfg, "--out-dir", str(out)]) == 0
        rows = read_rows(out / "pickands.csv")
        assert [float(r["T"]) for r in rows] == [1.0, 2.0, 4.0]
        values = [float(r["value"]) for r in rows]
        assert values[0] >= values[1] >= values[2]  # H(T)/T decreasing


class TestTheorems:
    def overlap_cfg(self, tmp_path):
        return write_config(
            tmp_path,
            estimation={"reps": 1000, "seed": 1, "H1": 1.0, "H2": 1.0},
            thresholds={"u": [2.0, 3.0]},
        )

    def touching_cfg(self, tmp_path):
        return write_config(
            tmp_path,
            name="touch.json",
            domain={"A1": [[[0, 1]]], "A2": [[[1, 2]]], "split_M": 0},
            estimation={"reps": 1000, "seed": 1, "H1": 1.0, "H2": 1.0},
            thresholds={"u": [2.0, 3.0]},
        )

    def test_overlap_routes_to_theorem1(self, tmp_path):
        out = tmp_path / "out"
        assert main([
            "theorem1", "--config", self.overlap_cfg(tmp_path), "--out-dir", str(out)
        ]) == 0
        rows = read_rows(out / "theorem1.csv")
        for r in rows:
            rebuilt = (
                float(r["constant"])
                * float(r["u"]) ** float(r["u_power"])
                * math.exp(float(r["exp_rate"]) * float(r["u"]) ** 2)
            )
            assert rebuilt == pytest.approx(float(r["value"]), rel=1e-12)

    def test_theorem1_on_touching_domains_fails(self, tmp_path):
        assert main([
            "theorem1", "--config", self.touching_cfg(tmp_path),
            "--out-dir", str(tmp_path / "o"),
        ]) == 1

    def test_theorem2_on_touching_domains(self, tmp_path):
        out = tmp_path / "out"
        assert main([
            "theorem2", "--config", self.touching_cfg(tmp_path), "--out-dir", str(out)
        ]) == 0
        rows = read_rows(out / "theorem2.csv")
        assert float(rows[0]["u_power"]) == pytest.approx(0.0)

    def test_theorem2_needs_split(self, tmp_path):
        assert main([
            "theorem2", "--config", self.overlap_cfg(tmp_path),
            "--out-dir", str(tmp_path / "o"),
        ]) == 1


class TestMcExcursion:
    def cfg(self, tmp_path):
        return write_config(
            tmp_path,
            grid={"points_per_axis": 10},
            estimation={"reps": 5000, "seed": 3},
            thresholds={"u": [1.0, 2.0]},
        )

    def test_schema_and_monotonicity(self, tmp_path):
        out = tmp_path / "out"
        assert main(["mc-excursion", "--config", self.cfg(tmp_path), "--out-dir", str(out)]) == 0
        rows = read_rows(out / "mc-excursion.csv")
        assert len(rows) == 2
        assert float(rows[0]["p_hat"]) >= float(rows[1]["p_hat"])
        for r in rows:
            assert int(r["hits"]) == round(float(r["p_hat"]) * int(r["reps"]))

    def test_byte_identical_rerun_and_threads(self, tmp_path):
        cfg = self.cfg(tmp_path)
        out1, out2, out3 = (tmp_path / n for n in ("o1", "o2", "o3"))
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out1)])
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out2)])
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out3), "--threads", "4"])
        b1 = (out1 / "mc-excursion.csv").read_bytes()
        assert b1 == (out2 / "mc-excursion.csv").read_bytes()
        assert b1 == (out3 / "mc-excursion.csv").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = self.cfg(tmp_path)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out1)])
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out2), "--seed", "99"])
        assert (out1 / "mc-excursion.csv").read_bytes() != (out2 / "mc-excursion.csv").read_bytes()

    def test_json_format_mirrors_rows(self, tmp_path):
        cfg = self.cfg(tmp_path)
        out = tmp_path / "oj"
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out), "--format", "json"])
        lines = (out / "mc-excursion.jsonl").read_text().splitlines()
        meta = json.loads(lines[0])
        assert "config_sha256" in meta["_meta"]
        rows = [json.loads(ln) for ln in lines[1:]]
        assert len(rows) == 2 and rows[0]["u"] == 1.0


class TestSimulateAndReuse:
    def test_simulate_then_mc_from_dump(self, tmp_path):
        cfg = write_config(
            tmp_path,
            grid={"points_per_axis": 6},
            estimation={"reps": 2000, "seed": 5},
            thresholds={"u": [1.5]},
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
        dump = out / "samples.bgrf"
        assert dump.exists()
        out2 = tmp_path / "reuse"
        assert main([
            "mc-excursion", "--config", cfg, "--out-dir", str(out2),
            "--samples", str(dump),
        ]) == 0
        out3 = tmp_path / "live"
        main(["mc-excursion", "--config", cfg, "--out-dir", str(out3)])
        assert (out2 / "mc-excursion.csv").read_bytes() == (out3 / "mc-excursion.csv").read_bytes()


class TestRiemannCheckCommand:
    def test_rows(self, tmp_path):
        cfg = write_config(
            tmp_path,
            model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.5, "dim_N": 1},
            verify={"riemann_u": [25.0], "riemann_T": 1.0},
        )
        out = tmp_path / "out"
        assert main([
            "riemann-check", "--config", cfg, "--out-dir", str(out), "--both-cells"
        ]) == 0
        rows = read_rows(out / "riemann-check.csv")
        assert [r["cells"] for r in rows] == ["intersect", "subset"]
        for r in rows:
            assert 0.9 < float(r["ratio"]) < 1.05


class TestVerify:
    def test_quick_verify_passes(self, tmp_path):
        cfg = write_config(
            tmp_path,
            model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.5, "dim_N": 1},
            grid={"points_per_axis": 30},
            estimation={"reps": 150_000, "seed": 11, "H1": 1.0, "H2": 1.0},
            thresholds={"u": [1.6, 2.0, 2.4, 2.8]},
            verify={"rate_tol": 0.15, "riemann_band": 0.10, "riemann_u": [25.0]},
        )
        out = tmp_path / "out"
        code = main(["verify", "--config", cfg, "--out-dir", str(out)])
        rows = read_rows(out / "verify.csv")
        assert len(rows) == 4
        assert code == 0

    def test_verify_rejects_starved_reps(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.5, "dim_N": 1},
            estimation={"reps": 10, "seed": 1, "H1": 1.0, "H2": 1.0},
        )
        assert main(["verify", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 1
        assert "floor" in capsys.readouterr().out

    def test_verify_fails_on_tight_band(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            model={"nu1": 0.5, "nu2": 0.5, "nu12": 1.5, "rho": 0.5, "dim_N": 1},
            grid={"points_per_axis": 10},
            estimation={"reps": 5000, "seed": 11, "H1": 1.0, "H2": 1.0},
            thresholds={"u": [1.0, 1.4, 1.8, 2.2]},
            verify={"rate_tol": 0.0001, "riemann_band": 0.10, "riemann_u": [25.0]},
        )
        assert main(["verify", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 1
        assert "FAILED" in capsys.readouterr().out


class TestOutputRouting:
    def test_env_var_default_directory(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        target = tmp_path / "from-env"
        monkeypatch.setenv("BGRF_OUT_DIR", str(target))
        assert main(["expansion", "--config", cfg]) == 0
        assert (target / "expansion.csv").exists()


class TestConsoleScript:
    def test_entry_point(self, tmp_path):
        cfg = write_config(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "bgrf.cli", "validate", "--config", cfg],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "PASS" in proc.stdout
