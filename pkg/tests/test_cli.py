import csv
import io
import json
import math

import pytest

from contact_spectral import __version__
from contact_spectral.cli import main, parse_config, run, write_config


def run_json(argv):
    code, text = run(argv)
    assert code == 0
    return json.loads(text)


class TestReportSchema:
    def test_fields(self, capsys):
        rep = run_json(["nonsqueeze", "--source-capacity", "3.8", "--target-capacity", "2.54"])
        assert set(rep) == {"command", "config_echo", "results", "tolerances", "wall_time", "toolkit_version"}
        assert rep["toolkit_version"] == __version__
        assert rep["wall_time"] is None

    def test_record_time(self, capsys):
        rep = run_json(["nonsqueeze", "--source-capacity", "3.8", "--target-capacity", "2.54", "--record-time"])
        assert rep["wall_time"] >= 0

    def test_twelve_digits(self, capsys):
        rep = run_json(["capacity", "--domain", "ball", "--radius", "1"])
        assert rep["results"][0]["capacity"] == float(f"{math.pi:.12g}")


class TestCommands:
    def test_nonsqueeze_obstruction(self, capsys):
        res = run_json(["nonsqueeze", "--source-capacity", "3.8", "--target-capacity", "2.54"])["results"][0]
        assert res["verdict"] == "obstruction"
        assert (res["source_capacity_ceiling"], res["target_capacity_ceiling"]) == (4, 3)

    def test_nonsqueeze_rigidity(self, capsys):
        res = run_json(["nonsqueeze", "--rigidity", "3,0.5,0.5,0.2"])["results"][0]
        assert (res["source_capacity_ceiling"], res["target_capacity_ceiling"]) == (2, 1)

    def test_profile_example(self, capsys):
        res = run_json(["profile", "--rho", "-0.4", "--r", "1", "--eps", "0.1"])["results"][0]
        assert res["contractible_spectrum"] == pytest.approx([0.0, 0.4], abs=1e-8)
        assert res["sup_error"] < 1e-6

    @pytest.mark.parametrize("target,c", [("reeb", -2.5), ("profile", 0.4), ("lifted-bump", 0.3)])
    def test_capacity_fixtures(self, target, c, capsys):
        res = run_json(["capacity", "--target", target])["results"][0]
        assert res["c"] == pytest.approx(c)
        assert res["ceiling"] == math.ceil(c)

    def test_action_reeb(self, capsys):
        res = run_json(["action", "--fixture", "reeb", "--T", "1.0", "--shift", "1.0", "--x", "0.3,0.2,0.1"])
        assert res["results"][0]["action"] == pytest.approx(-1.0, abs=1e-6)

    def test_action_supplied_loop(self, tmp_path, capsys):
        import numpy as np

        loop = np.tile([0.3, 0.1, 0.2, 1.0], (17, 1))
        path = tmp_path / "loop.npy"
        np.save(path, loop)
        res = run_json(["action", "--loop", str(path), "--T", "0.5"])["results"][0]
        # a constant loop only sees the Hamiltonian term, -T for the Reeb flow
        assert res["action"] == pytest.approx(-0.5, abs=1e-12) and res["method"] == "supplied loop"

    def test_hz_oscillator(self, capsys):
        res = run_json(["hz-probe", "--hamiltonian", "oscillator", "--grid", "4"])["results"][0]
        assert res["admissible_consistent"] is False

    def test_flow_profile(self, capsys):
        res = run_json(["flow", "--steps", "200"])["results"][0]
        assert res["ratio"] >= 14


class TestCsv:
    def test_spectrum_columns(self, capsys):
        code, text = run(["spectrum", "--seeds", "64", "--lo", "-0.2", "--hi", "0.6", "--format", "csv"])
        assert code == 0
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["action", "shift", "contractible", "s_cluster"]
        actions = sorted(float(r[0]) for r in rows[1:] if r[2] == "True")
        assert actions == pytest.approx([0.0, 0.4], abs=1e-8)

    def test_scan_table(self, capsys):
        code, text = run(["profile", "--scan", "20", "--format", "csv"])
        assert code == 0
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["rho", "l", "g"]
        assert len([r for r in rows[1:] if not r[0].startswith("#")]) == 21
        assert rows[-1][0].startswith("# root=")

    def test_key_value_fallback(self, capsys):
        code, text = run(["nonsqueeze", "--source-capacity", "3.8", "--target-capacity", "2.54", "--format", "csv"])
        rows = dict(list(csv.reader(io.StringIO(text)))[1:])
        assert rows["verdict"] == "obstruction"


class TestExitCodes:
    def test_bad_flag(self, capsys):
        assert main(["profile", "--no-such-flag"]) == 1

    def test_unknown_command(self, capsys):
        assert main(["squeeze"]) == 1

    def test_infeasible_profile(self, capsys):
        assert main(["profile", "--rho", "-4"]) == 1
        assert "feasibility" in capsys.readouterr().err

    def test_missing_capacities(self, capsys):
        assert main(["nonsqueeze"]) == 1

    def test_bad_format(self, capsys):
        assert main(["nonsqueeze", "--source-capacity", "1", "--target-capacity", "1", "--format", "xml"]) == 1

    def test_unwritable_output(self, tmp_path, capsys):
        bad = str(tmp_path / "missing" / "r.json")
        assert main(["nonsqueeze", "--source-capacity", "1", "--target-capacity", "1", "--output", bad]) == 1

    def test_numerical_failure(self, capsys):
        # the cutoff needs r > 1 + eps; the probe with an oversized bump blows up instead
        assert main(["hz-probe", "--hamiltonian", "cutoff", "--r", "1.05"]) == 1
        assert main(["hz-probe", "--hamiltonian", "oscillator", "--period-limit", "0"]) == 2


class TestConfig:
    def test_parse(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nrho = -0.3\n\nsource-capacity = 2 # trailing\n")
        assert parse_config(str(p)) == {"rho": "-0.3", "source_capacity": "2"}

    def test_malformed(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("rho -0.3\n")
        assert main(["profile", "--config", str(p)]) == 1

    def test_unknown_key(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("colour = blue\n")
        assert main(["profile", "--config", str(p)]) == 1

    def test_wrong_command(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("command = spectrum\n")
        assert main(["profile", "--config", str(p)]) == 1

    def test_flags_win(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("source_capacity = 1.5\ntarget_capacity = 1.2\n")
        rep = run_json(["nonsqueeze", "--config", str(p), "--target-capacity", "0.5"])
        assert rep["config_echo"]["source_capacity"] == 1.5
        assert rep["results"][0]["verdict"] == "obstruction"

    def test_echo_round_trip(self, tmp_path, capsys):
        argv = ["profile", "--rho", "-0.3", "--eps", "0.12", "--steps", "200"]
        first = run_json(argv)
        p = tmp_path / "echo.cfg"
        p.write_text(write_config(first["config_echo"]))
        again = run_json(["profile", "--config", str(p)])
        assert again == first


class TestDeterminism:
    def test_identical_bytes(self, capsys):
        argv = ["translated-points", "--seeds", "64", "--seed", "7", "--shift-lo", "-0.6", "--shift-hi", "0.2"]
        assert run(argv)[1] == run(argv)[1]

    def test_output_file(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code, text = run(["capacity", "--output", str(out)])
        assert code == 0 and out.read_text() == text
        assert capsys.readouterr().out == ""


def test_verify_exit_zero(capsys):
    code, text = run(["verify"])
    assert code == 0
    checks = json.loads(text)["results"]
    assert all(c["passed"] for c in checks) and len(checks) > 20
