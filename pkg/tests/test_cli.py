import csv
import json
import math

import pytest

from acdcdyn.cli import main
from acdcdyn.system import scenario_islanded_pv, steady_state


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


class TestConfigHandling:
    def test_invalid_json_exit_1(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["poles", "--config", str(p), "--out",
                     str(tmp_path / "o")]) == 1
        assert "line" in capsys.readouterr().err

    def test_missing_scenario_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, {"options": {}})
        assert main(["poles", "--config", cfg, "--out",
                     str(tmp_path / "o")]) == 1

    def test_unknown_preset_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "bogus"})
        assert main(["poles", "--config", cfg, "--out",
                     str(tmp_path / "o")]) == 1

    def test_improper_step_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "overrides": {"vscs.0.control.tau_kd_s": 0.0},
            "options": {"input": "p_load_load1"}})
        out = tmp_path / "o"
        assert main(["step", "--config", cfg, "--out", str(out)]) == 1
        err = json.loads((out / "error.json").read_text())
        assert "ImproperController" in err["message"]


class TestArtifacts:
    def test_poles_schema_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "islanded_pv"})
        out = tmp_path / "run"
        assert main(["poles", "--config", cfg, "--out", str(out)]) == 0
        rows = read_csv(out / "poles.csv")
        assert rows[0] == ["re", "im", "structural"]
        assert sum(int(r[2]) for r in rows[1:]) == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["per_unit_base"]["s_base_va"] == 50000.0
        assert manifest["outputs"] == ["poles.csv"]

    def test_determinism_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "options": {"input": "p_load_load1", "output": "omega_vsc1",
                        "points": 40}})
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["bode", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["bode", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "bode.csv").read_bytes() == \
            (out2 / "bode.csv").read_bytes()

    def test_steady_matches_library(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "islanded_pv",
                                      "options": {"delta_p_l_w": 2500.0}})
        out = tmp_path / "run"
        assert main(["steady", "--config", cfg, "--out", str(out)]) == 0
        rows = {r[0]: r[1] for r in read_csv(out / "steady.csv")[1:]}
        st = steady_state(scenario_islanded_pv(), 0.05)
        assert float(rows["domega"]) == pytest.approx(st.domega, rel=1e-8)
        assert float(rows["dp_pv"]) == pytest.approx(st.dp_pv, rel=1e-8)
        assert float(rows["dv_dc_vsc1"]) == pytest.approx(st.dv_dc["vsc1"],
                                                          rel=1e-8)

    def test_step_csv_columns(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "options": {"input": "p_load_load1", "t_end_s": 1.0,
                        "dt_s": 0.01}})
        out = tmp_path / "run"
        assert main(["step", "--config", cfg, "--out", str(out)]) == 0
        rows = read_csv(out / "step.csv")
        assert rows[0][0] == "t_s"
        assert "omega_vsc1" in rows[0]
        assert len(rows) == 102  # header + 101 samples

    def test_check_reports_verdicts(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "lvdc_async"})
        out = tmp_path / "run"
        assert main(["check", "--config", cfg, "--out", str(out)]) == 0
        rows = {r[0]: r[1] for r in read_csv(out / "check.csv")[1:]}
        assert rows["stable"] == "true"
        assert rows["ratio_bound_vsc1"] == "pass"

    def test_sweep_csv(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "options": {"parameter": "k_d", "values": [0.005, 0.01],
                        "input": "p_load_load1", "output": "omega_vsc1"}})
        out = tmp_path / "run"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        rows = read_csv(out / "sweep.csv")
        assert rows[0][:4] == ["k_d", "stable", "f_peak_hz", "mag_peak_db"]
        assert len(rows) == 3
        assert all(r[1] == "1" for r in rows[1:])

    def test_spectrum_csv(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "options": {"input": "p_load_load1", "channel": "v_dc_vsc1",
                        "t_end_s": 4.0, "dt_s": 0.01}})
        out = tmp_path / "run"
        assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
        rows = read_csv(out / "spectrum.csv")
        assert rows[0] == ["f_hz", "magnitude"]
        assert float(rows[1][0]) == 0.0


class TestSetFlag:
    def test_set_overrides_and_options(self, tmp_path):
        cfg = write_config(tmp_path, {
            "scenario": "islanded_pv",
            "options": {"input": "p_load_load1", "output": "omega_vsc1"}})
        out = tmp_path / "run"
        assert main(["bode", "--config", cfg, "--out", str(out),
                     "--set", "options.points=25",
                     "--set", "vscs.0.control.k_d=0.005"]) == 0
        rows = read_csv(out / "bode.csv")
        assert len(rows) == 26
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved_parameters"]["vscs"][0]["control"]["k_d"] \
            == 0.005

    def test_malformed_set(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"scenario": "islanded_pv"})
        assert main(["poles", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--set", "nonsense"]) == 1
