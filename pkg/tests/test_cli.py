import io
import json
import subprocess
import sys

import pytest

from siegel_poincare.cli import DEFAULTS, EXIT_OK, EXIT_TRUNCATION, EXIT_USAGE, main

SMALL = ["--c-max", "10", "--s-max", "5", "--norm-max", "2"]


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    status = main(argv, stdout=out, stderr=err)
    return status, out.getvalue(), err.getvalue()


def manifest_of(err):
    lines = [json.loads(l) for l in err.splitlines() if l.strip()]
    return [l for l in lines if "config_hash" in l][-1]


class TestCoefficient:
    def test_identity(self):
        status, out, err = run(["coefficient", "--k", "10", "--Q", "1,0,1", "--T", "1,0,1"] + SMALL)
        assert status == EXIT_OK
        data = json.loads(out)
        assert data["rank0"] == 8 and data["tail_certified"] is True
        man = manifest_of(err)
        assert man["exit_status"] == 0 and man["command"] == "coefficient"
        assert "wall_seconds" in man["timings"] and man["versions"]["mpmath"]

    def test_malformed_form(self):
        status, out, err = run(["coefficient", "--Q", "1,0,-1", "--T", "1,0,1"])
        assert status == EXIT_USAGE and out == ""
        assert "error" in err

    def test_unreachable_target(self):
        status, out, err = run(["coefficient", "--Q", "1,0,1", "--T", "1,0,1", "--tail-target", "1e-12"] + SMALL)
        assert status == EXIT_TRUNCATION
        data = json.loads(out)
        assert data["error"] == "truncation" and data["achieved_tail"] > 1e-12

    def test_deterministic_output(self):
        argv = ["coefficient", "--Q", "1,0,1", "--T", "1,0,2"] + SMALL
        a, b = run(argv), run(argv)
        assert a[1] == b[1]
        assert manifest_of(a[2])["config_hash"] == manifest_of(b[2])["config_hash"]

    def test_global_flags_before_command(self):
        a = run(["--k", "12"] + SMALL + ["coefficient", "--Q", "1,0,1", "--T", "1,0,1"])
        b = run(["coefficient", "--k", "12", "--Q", "1,0,1", "--T", "1,0,1"] + SMALL)
        assert a[0] == b[0] == EXIT_OK and a[1] == b[1]
        assert json.loads(a[1])["weight"]["k"] == 12

    def test_csv(self):
        status, out, _ = run(["coefficient", "--Q", "1,0,1", "--T", "1,0,1", "--format", "csv"] + SMALL)
        assert status == EXIT_OK
        assert out.splitlines()[0] == "key,value" and "rank0,8" in out


class TestConfig:
    def test_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# small run\nk = 12\nc-max = 10\ns-max = 5\nnorm-max = 2\n")
        status, out, _ = run(["coefficient", "--config", str(cfg), "--Q", "1,0,1", "--T", "1,0,1"])
        assert status == EXIT_OK and json.loads(out)["weight"]["k"] == 12
        status, out, _ = run(["coefficient", "--config", str(cfg), "--k", "10", "--Q", "1,0,1", "--T", "1,0,1"])
        assert status == EXIT_OK and json.loads(out)["weight"]["k"] == 10

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just words\n")
        assert run(["bessel", "--config", str(cfg), "--l", "8.5", "--x", "1"])[0] == EXIT_USAGE
        assert run(["bessel", "--config", str(tmp_path / "missing"), "--l", "8.5", "--x", "1"])[0] == EXIT_USAGE

    def test_defaults_table(self):
        assert DEFAULTS["k"] == 10 and DEFAULTS["bits"] == 128


class TestOutputs:
    def test_out_file_and_manifest(self, tmp_path):
        target = tmp_path / "res.json"
        status, out, _ = run(["bessel", "--l", "8.5", "--x", "20", "--out", str(target)])
        assert status == EXIT_OK and out == ""
        assert json.loads(target.read_text())
        man = json.loads((tmp_path / "res.json.manifest.json").read_text())
        assert man["exit_status"] == 0 and len(man["config_hash"]) == 64


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["coefficient", "--Q", "1,0,1"],
            ["coefficient", "--k", "9", "--Q", "1,0,1", "--T", "1,0,1"],
            ["coefficient", "--bits", "32", "--Q", "1,0,1", "--T", "1,0,1"],
            ["maass", "--Q", "1,0,1", "--mnr", "2,2"],
            ["maass", "--Q", "1,0,1", "--mnr", "1,1,2"] + SMALL,
            ["matrix", "--indices", "2,2"] + SMALL,
            ["kloosterman", "--Q", "1,0,1", "--T", "1,0,1", "--C", "1,2,2,4"],
            ["eigencheck", "--C", "1,2,2,4"],
            ["hsum", "--P", "1,0,1", "--S", "1,0,1", "--c", "0"],
            ["bessel", "--l", "8.25", "--x", "1"],
            ["bounds", "--bessel", "--c", "1.2"],
            ["bounds"],
        ],
    )
    def test_exit_one(self, argv):
        assert run(argv)[0] == EXIT_USAGE


class TestCommands:
    def test_bessel(self):
        status, out, _ = run(["bessel", "--l", "8.5", "--x", "20"])
        assert status == EXIT_OK
        assert json.loads(out)["value"].startswith("0.03087718964435")

    def test_bounds_bessel(self):
        status, out, _ = run(["bounds", "--bessel", "--c", "1.4"])
        data = json.loads(out)
        assert status == EXIT_OK and data["all_hold"] is True and len(data["rows"]) == 30

    def test_eigencheck_random(self):
        status, out, _ = run(["eigencheck", "--random", "200", "--seed", "3"])
        data = json.loads(out)
        assert status == EXIT_OK and data["all_hold"] is True and data["count"] == 200 and data["failures"] == []

    def test_kloosterman_with_oracle(self):
        status, out, _ = run(["kloosterman", "--Q", "1,0,1", "--T", "1,0,2", "--C", "2,1,0,3", "--bruteforce"])
        data = json.loads(out)
        assert status == EXIT_OK and data["agree"] is True

    def test_hsum(self):
        status, out, _ = run(["hsum", "--P", "1,1,2", "--S", "3,-1,2", "--c", "6", "--sign", "-"])
        assert status == EXIT_OK and json.loads(out)["terms"] == 12

    def test_matrix_csv(self):
        status, out, _ = run(["matrix", "--k", "10", "--indices", "1,2", "--format", "csv"] + SMALL)
        assert status == EXIT_OK
        assert out.splitlines()[0] == ",1,2" and len(out.splitlines()) == 3

    def test_certify(self):
        status, out, _ = run(["certify", "--k", "10", "--indices", "2,3"] + SMALL)
        data = json.loads(out)
        assert status == EXIT_OK
        assert len(data["per_row_margin"]) == 2 and data["matrix"]["normalized"] is True

    def test_maass_and_symmetry(self):
        status, out, _ = run(["maass", "--Q", "1,0,1", "--mnr", "2,1,0"] + SMALL)
        assert status == EXIT_OK and "residual" in json.loads(out)
        status, out, _ = run(["symmetry", "--Q", "1,0,1", "--T", "1,0,1"] + SMALL)
        assert status == EXIT_OK and json.loads(out)["gap"] == 0

    def test_bounds_decay(self):
        status, out, _ = run(["bounds", "--decay", "--ks", "10,12", "--p", "1", "--q", "1"] + SMALL)
        rows = json.loads(out)["rows"]
        assert status == EXIT_OK and [r["k"] for r in rows] == [10, 12]


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "siegel_poincare.cli", "bessel", "--l", "0.5", "--x", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["value"]
