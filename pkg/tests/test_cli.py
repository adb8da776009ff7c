import json
import subprocess
import sys

import pytest

from unidec.cli import run_command

SMALL = ["--N", "32", "--r", "2", "--Nt", "32", "--T", "1", "--K", "3"]


def out(tmp_path, name="out"):
    return ["--output", str(tmp_path / name)]


class TestExitCodes:
    def test_no_command(self):
        """An empty command line is a usage error."""
        assert run_command([]) == 64

    def test_unknown_command(self):
        """Unknown commands are usage errors."""
        assert run_command(["bogus"]) == 64

    def test_bad_flag(self, tmp_path):
        """Argparse errors map to invalid input."""
        assert run_command(["whitney", "--depth", "x"] + out(tmp_path)) == 2

    def test_help(self, capsys):
        """--help exits cleanly."""
        assert run_command(["whitney", "--help"]) == 0
        assert "--depth" in capsys.readouterr().out

    def test_depth_range(self, tmp_path):
        """Depths beyond the supported range are invalid."""
        assert run_command(["whitney", "--depth", "30"] + out(tmp_path)) == 2

    def test_unknown_estimate(self, tmp_path):
        """Unknown estimate ids are invalid input."""
        assert run_command(["verify", "NOPE", "--K", "1"] + out(tmp_path)) == 2

    def test_missing_config(self, tmp_path):
        """A missing INI file is invalid input."""
        assert run_command(["whitney", "--config", str(tmp_path / "none.ini")] + out(tmp_path)) == 2

    def test_missing_report_dir(self, tmp_path):
        """report needs an existing output directory."""
        assert run_command(["report"] + out(tmp_path, "absent")) == 2

    def test_console_script(self):
        """The module entry point prints the version."""
        res = subprocess.run([sys.executable, "-m", "unidec.cli", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("unidec ")


class TestWhitney:
    def test_outputs_and_rerun(self, tmp_path):
        """Reruns with the same settings give byte-identical files."""
        args = ["whitney", "--depth", "6", "--defect-depths", "4,5,6"] + out(tmp_path)
        assert run_command(args) == 0
        names = ["whitney_pairs.csv", "whitney_defect.csv", "whitney.json"]
        first = {n: (tmp_path / "out" / n).read_bytes() for n in names}
        assert run_command(args) == 0
        assert all((tmp_path / "out" / n).read_bytes() == first[n] for n in names)
        doc = json.loads(first["whitney.json"])
        assert doc["check"]["depth"] == 6 and doc["version"]
        assert first["whitney_pairs.csv"].startswith(b"# unidec ")

    def test_ini_config(self, tmp_path):
        """Settings in an INI file are honoured and flags override them."""
        ini = tmp_path / "run.ini"
        ini.write_text("[run]\nseed = 3\n\n[whitney]\ndepth = 5\ndefect_depths = 4,5\n")
        assert run_command(["whitney", "--config", str(ini)] + out(tmp_path)) == 0
        doc = json.loads((tmp_path / "out" / "whitney.json").read_text())
        assert doc["config"]["seed"] == 3 and doc["check"]["depth"] == 5
        assert run_command(["whitney", "--config", str(ini), "--depth", "4"] + out(tmp_path)) == 0
        assert json.loads((tmp_path / "out" / "whitney.json").read_text())["check"]["depth"] == 4


class TestVerify:
    def test_maximal_fit(self, tmp_path):
        """A k1 sweep writes a fit with a positive slope."""
        args = ["verify", "MAX", "--k1", "8,16,32,64", "--samples", "1", "--N", "64", "--r", "4", "--K", "1"]
        assert run_command(args + out(tmp_path)) == 0
        fit = json.loads((tmp_path / "out" / "fits.json").read_text())
        assert fit["expected_slope"] == 0.25
        assert 0.1 < fit["slope"] < 0.5

    def test_orthogonality(self, tmp_path):
        """ORTH writes its own summary."""
        assert run_command(["verify", "ORTH", "--tuples", "50", "--K", "1"] + out(tmp_path)) == 0
        doc = json.loads((tmp_path / "out" / "verify_ORTH.json").read_text())
        assert doc["result"]["tuples"] == 50
        assert doc["result"]["failures_spec"] == 0 and doc["result"]["failures_derived"] == 0

    def test_bad_param(self, tmp_path):
        """Extra parameters must be key=value."""
        assert run_command(["verify", "GSE2", "--param", "oops", "--K", "1"] + out(tmp_path)) == 2


class TestSolveAndReport:
    def test_solve_norms_report(self, tmp_path):
        """Solve, evaluate the stored solution, and render figures."""
        d = out(tmp_path)
        assert run_command(["solve", "--preset", "dnls1-n2-k3", "--delta", "0.01"] + SMALL + d) == 0
        solve = json.loads((tmp_path / "out" / "solve.json").read_text())
        assert solve["diagnostics"]["converged"]
        snap = str(tmp_path / "out" / "solution.udf")
        assert run_command(["norms", snap] + SMALL + d) == 0
        norms = json.loads((tmp_path / "out" / "norms.json").read_text())
        assert norms["kind"] == "spacetime" and norms["working_X1"] > 0
        assert run_command(["report"] + d) == 0
        assert (tmp_path / "out" / "solve_iterates.png").stat().st_size > 0

    def test_scatter(self, tmp_path):
        """Scattering states are written for both directions."""
        assert run_command(["scatter", "--preset", "dnls1-n2-k3", "--delta", "0.01"] + SMALL + out(tmp_path)) == 0
        doc = json.loads((tmp_path / "out" / "scatter.json").read_text())
        assert set(doc["states"]) == {"+", "-"}

    def test_missing_snapshot(self, tmp_path):
        """norms needs an existing snapshot."""
        assert run_command(["norms", str(tmp_path / "x.udf")] + out(tmp_path)) == 2

    def test_non_contracting(self, tmp_path):
        """Large data stop with the numerical exit code."""
        args = ["solve", "--preset", "dnls1-n2-k3", "--delta", "50", "--max-iter", "12"] + SMALL + out(tmp_path)
        assert run_command(args) == 3
