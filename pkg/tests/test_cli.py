import json
import os

import numpy as np
import pytest

from spintomo.cli import main


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "f = 4\n"
        "raman_durations = 0,0.8\n"
        "n_shots = 3000\n"
        "seed = 11\n"
    )
    return str(path)


def run_cli(*argv):
    return main(list(argv))


class TestLimits:
    def test_table_values(self, tmp_path):
        out = tmp_path / "limits.csv"
        assert run_cli("limits", "4", "--out", str(out)) == 0
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        header = lines[0].split(",")
        assert header[0] == "f"
        rows = {float(l.split(",")[0]): [float(x) for x in l.split(",")[1:]] for l in lines[1:]}
        assert set(rows) == {1.0, 2.0, 3.0, 4.0}
        chi2, _, zeta2, _, xi2, _ = rows[4.0]
        assert abs(chi2 - 0.163) <= 0.005
        assert abs(zeta2 - 0.247) <= 0.005
        assert abs(xi2 - 0.327) <= 0.005

    def test_json_format(self, tmp_path):
        out = tmp_path / "limits.json"
        assert run_cli("limits", "2", "--out", str(out), "--format", "json") == 0
        payload = json.loads(out.read_text())
        assert payload["rows"][0]["f"] == 1.0
        assert "params_sha256" in payload

    def test_half_spin_refused(self, capsys):
        assert run_cli("limits", "0.5") == 2
        err = capsys.readouterr().err
        assert err.count("\n") == 1
        assert "cannot squeeze" in err

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("limits", "1", "--out", str(a))
        run_cli("limits", "1", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()


class TestSweep:
    def test_single_duration_csv(self, tmp_path):
        cfg = tmp_path / "one.cfg"
        cfg.write_text("raman_durations = 0.5\nn_shots = 500\nseed = 2\n")
        out = tmp_path / "sweep.csv"
        assert run_cli("sweep", "--config", str(cfg), "--out", str(out)) == 0
        lines = out.read_text().splitlines()
        comments = [l for l in lines if l.startswith("#")]
        data = [l for l in lines if not l.startswith("#")]
        assert any(l.startswith("# config_sha256=") for l in comments)
        assert len(data) == 2  # header + one row

    def test_deterministic_and_seed_override(self, config_path, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        assert run_cli("sweep", "--config", config_path, "--out", str(a)) == 0
        assert run_cli("sweep", "--config", config_path, "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()
        assert run_cli("sweep", "--config", config_path, "--out", str(c), "--seed", "99") == 0
        assert a.read_bytes() != c.read_bytes()

    def test_json_format(self, config_path, tmp_path):
        out = tmp_path / "sweep.json"
        assert run_cli("sweep", "--config", config_path, "--out", str(out), "--format", "json") == 0
        payload = json.loads(out.read_text())
        assert len(payload["rows"]) == 2

    def test_missing_config(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.cfg")
        assert run_cli("sweep", "--config", missing, "--out", str(tmp_path / "x.csv")) == 2
        err = capsys.readouterr().err
        assert "config not found" in err
        assert err.count("\n") == 1

    def test_no_partial_output_on_failure(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kappa2 = 0\nraman_durations = 0.5\nn_shots = 100\n")
        out = tmp_path / "out.csv"
        assert run_cli("sweep", "--config", str(cfg), "--out", str(out)) == 2
        assert not out.exists()
        assert not list(tmp_path.glob(".spintomo-*"))

    def test_unwritable_output_dir(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "missing_dir" / "sweep.csv")
        assert run_cli("sweep", "--config", config_path, "--out", out) == 2
        err = capsys.readouterr().err
        assert err.startswith("usage error:")  # not misreported as a config problem


class TestRecordsAndReconstruct:
    def test_pipeline(self, config_path, tmp_path):
        rec_path = tmp_path / "rec.csv"
        assert run_cli("records", "--config", config_path, "--tr", "0.8", "--out", str(rec_path)) == 0
        text = rec_path.read_text()
        assert "# kappa2=" in text
        assert "# t_r_ms=0.8" in text
        assert "# config_sha256=" in text

        out = tmp_path / "cc.json"
        assert run_cli("reconstruct", str(rec_path), "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        assert "corrected_covariance" in payload
        assert "mle" not in payload
        assert payload["corrected_covariance"]["n_shots"] == 3000

    def test_reconstruct_with_mle(self, config_path, tmp_path):
        rec_path = tmp_path / "rec.csv"
        run_cli("records", "--config", config_path, "--tr", "0", "--out", str(rec_path))
        out = tmp_path / "full.json"
        assert run_cli("reconstruct", str(rec_path), "--out", str(out), "--mle") == 0
        payload = json.loads(out.read_text())
        assert payload["mle"]["dim"] == 10
        flat = np.array(payload["mle"]["rho_row_major_re_im"])
        p0 = flat[0, 0]
        assert p0 > 0.8  # undriven point reconstructs to near-vacuum

    def test_records_deterministic(self, config_path, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("records", "--config", config_path, "--tr", "0.8", "--out", str(a))
        run_cli("records", "--config", config_path, "--tr", "0.8", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_missing_records_file(self, tmp_path, capsys):
        assert run_cli("reconstruct", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o.json")) == 2
        assert "records file not found" in capsys.readouterr().err


class TestQpd:
    def test_grid_output(self, config_path, tmp_path):
        out = tmp_path / "qpd.csv"
        assert run_cli("qpd", "--config", config_path, "--tr", "0.8",
                       "--grid", "12x24", "--out", str(out)) == 0
        lines = out.read_text().splitlines()
        data = [l for l in lines if not l.startswith("#") and not l.startswith("theta")]
        assert len(data) == 12 * 24
        values = np.array([float(l.split(",")[2]) for l in data])
        assert values.min() >= 0.0
        assert values.max() <= 1.0

    def test_bad_grid_spec(self, config_path, tmp_path, capsys):
        assert run_cli("qpd", "--config", config_path, "--tr", "0.5",
                       "--grid", "12", "--out", str(tmp_path / "q.csv")) == 2
        assert "usage error" in capsys.readouterr().err


class TestParser:
    def test_unknown_command(self, capsys):
        assert run_cli("frobnicate") == 2

    def test_missing_required_flag(self, capsys):
        assert run_cli("sweep", "--out", "x.csv") == 2

    def test_stdout_output(self, capsys):
        assert run_cli("limits", "1") == 0
        out = capsys.readouterr().out
        assert "zeta2_min" in out
