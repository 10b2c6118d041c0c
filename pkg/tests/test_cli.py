import json
import subprocess
import sys

import pytest

from lpmbrw.cli import OUTPUT_ENV, main

from conftest import PLUS_MINUS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestConstants:
    def test_binary_gaussian(self, capsys):
        code, out, _ = run(capsys, "constants")
        assert code == 0
        for line in ("theta0 = 1.177410", "1/(2 theta0) = 0.424661", "3/(2 theta0) = 1.273983",
                     "sigma^2 = 1.386294", "nu(theta0)/theta0 = 1.177410"):
            assert line in out

    def test_unbounded(self, capsys):
        code, out, _ = run(capsys, "constants", "--model", json.dumps(PLUS_MINUS))
        assert code == 0
        assert "theta0: unbounded within search_max=64" in out

    def test_malformed_names_assumption(self, capsys):
        spec = {"family": "iid_product", "offspring": {"kind": "poisson", "lam": 2.0},
                "displacement": {"kind": "gaussian"}}
        code, _, err = run(capsys, "constants", "--model", json.dumps(spec))
        assert code == 2 and "A2" in err

    def test_heavy_tail(self, capsys):
        spec = {"family": "iid_product", "offspring": {"kind": "binary"},
                "displacement": {"kind": "cauchy"}}
        code, _, err = run(capsys, "constants", "--model", json.dumps(spec))
        assert code == 2 and "A1" in err

    def test_model_file(self, capsys, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps(PLUS_MINUS))
        assert run(capsys, "constants", "--model", str(p))[0] == 0

    def test_bad_json(self, capsys):
        assert run(capsys, "constants", "--model", "{oops")[0] == 2


class TestSimulate:
    def test_dump(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", "--n", "4", "--theta", "0.5", "1.0",
                           "--output-dir", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "trajectory_summary.csv").read_text().splitlines()
        assert lines[0] == "k,N_k,R_k,logW_0.5,logW_1.0,D_k"
        assert len(lines) == 6 and lines[1].startswith("0,1,0.0,0.0,0.0")

    def test_env_default_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert run(capsys, "simulate", "--n", "2")[0] == 0
        assert (tmp_path / "simulate" / "trajectory_summary.csv").exists()

    def test_cap(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--n", "12", "--cap", "100",
                           "--output-dir", str(tmp_path))
        assert code == 3 and "cap" in err


class TestExperiment:
    def test_replications_zero(self, capsys, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"kind": "slln", "replications": 0}))
        assert run(capsys, "experiment", str(p))[0] == 2

    def test_cap_exit(self, capsys, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"kind": "slln", "n": [40], "cap": 1 << 27}))
        code, _, err = run(capsys, "experiment", str(p), "--output-dir", str(tmp_path / "o"))
        assert code == 3 and "cap" in err

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "experiment", str(tmp_path / "none.json"))[0] == 2

    def test_needs_one_source(self, capsys):
        assert run(capsys, "experiment")[0] == 2

    def test_overrides_and_report(self, capsys, tmp_path):
        out = tmp_path / "o"
        code, text, _ = run(capsys, "experiment", "--default", "log_correction",
                            "--n", "4", "5", "6", "7", "--replications", "100",
                            "--theta", "0.5", "theta0", "--seed", "3",
                            "--output-dir", str(out))
        assert code in (0, 1)
        echo = json.loads((out / "config.json").read_text())
        assert echo["n"] == [4, 5, 6, 7] and echo["seed"] == 3
        assert echo["thetas"] == [0.5, "theta0"] and echo["replications"] == 100
        (out / "log_correction.svg").unlink()
        code2, text2, _ = run(capsys, "report", str(out))
        assert code2 == code
        assert (out / "log_correction.svg").exists()
        assert "re-rendered" in text2

    def test_seed_determines_bytes(self, capsys, tmp_path):
        outs = []
        for name in ("a", "b"):
            d = tmp_path / name
            run(capsys, "experiment", "--default", "rde_check", "--n", "6",
                "--replications", "300", "--seed", "11", "--output-dir", str(d))
            outs.append([(d / f).read_bytes() for f in ("rde_check.csv", "reports.json",
                                                         "constants.json")])
        assert outs[0] == outs[1]

    def test_report_missing_dir(self, capsys, tmp_path):
        assert run(capsys, "report", str(tmp_path))[0] == 2


class TestParser:
    @pytest.mark.parametrize("sub", ["constants", "simulate", "experiment", "report"])
    def test_help(self, sub):
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["constants", "--bogus"])
        assert exc.value.code == 2

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "lpmbrw.cli", "constants"],
                             capture_output=True, text=True, check=False)
        assert res.returncode == 0 and "theta0 = 1.177410" in res.stdout
