import json

import pytest

from wml.cli import EXIT_CHECK_FAILURE, EXIT_CONFIG_ERROR, EXIT_PASS, \
    RunConfig, _config_from_mapping, emit, main, read_config_file, \
    report_csv, report_json, run
from wml.errors import ConfigurationError
from wml.scenarios import list_scenarios


def test_list_scenarios_registry():
    names = [s.name for s in list_scenarios()]
    assert names == sorted(names)
    for expected in ("disk_linear", "annulus_linear", "disk_saddle",
                     "disk_interior_min", "interval_robin"):
        assert expected in names
    assert list_scenarios("disk") == [s for s in list_scenarios()
                                      if "disk" in s.name]
    assert list_scenarios("no_such_scenario") == []


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nscenario = disk_linear\nbc=absolute\n"
                    "T_list = 4,8\ntarget_h=0.1\nseed = 7\n")
    cfg = _config_from_mapping(read_config_file(str(path)))
    assert cfg.scenario == "disk_linear"
    assert cfg.T_list == (4.0, 8.0)
    assert cfg.target_h == 0.1
    assert cfg.seed == 7


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigurationError):
        _config_from_mapping({"mesh_size": "0.1"})


def test_config_rejects_bad_value():
    with pytest.raises(ConfigurationError):
        _config_from_mapping({"target_h": "coarse"})


def test_validation_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        RunConfig(scenario="no_such").validate()
    with pytest.raises(ConfigurationError):
        RunConfig(bc="mixed").validate()
    with pytest.raises(ConfigurationError):
        RunConfig(T_list=(8.0, 4.0)).validate()
    with pytest.raises(ConfigurationError):
        RunConfig(T_list=(4.0, 64.0), target_h=0.2).validate()


def test_main_exit_codes_for_config_errors(capsys):
    assert main(["run", "--scenario", "no_such"]) == EXIT_CONFIG_ERROR
    assert main(["run", "--scenario", "disk_linear", "--T", "8,4"]) \
        == EXIT_CONFIG_ERROR


def test_model_suite_run_and_determinism():
    cfg = RunConfig(scenario="interval_robin", T_list=(2.0,), target_h=0.01)
    rep_a = run(cfg)
    rep_b = run(RunConfig(scenario="interval_robin", T_list=(2.0,),
                          target_h=0.01))
    assert rep_a.all_passed
    assert report_json(rep_a) == report_json(rep_b)
    parsed = json.loads(report_json(rep_a))
    assert parsed["all_passed"] is True
    assert parsed["model_suite"]["halfline"][0]["T"] == 2


def test_surface_run_report_and_emission(tmp_path):
    cfg = RunConfig(scenario="disk_linear", bc="absolute",
                    T_list=(4.0, 8.0), target_h=0.08)
    rep = run(cfg)
    assert rep.all_passed
    assert rep.counts["generators"] == [1, 0, 0]
    assert rep.complex_summary["betti"] == [1, 0, 0]
    csv_text = report_csv(rep)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "T,degree,bc,count,lambda_small,lambda_big"
    assert len(lines) == 1 + 2 * 3
    out = tmp_path / "report.json"
    emit(rep, "json", str(out))
    parsed = json.loads(out.read_text())
    assert parsed["config"]["scenario"] == "disk_linear"
    assert "timings" not in parsed


def test_main_full_pipeline(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--scenario", "disk_linear", "--bc", "absolute",
                 "--T", "4,8", "--h", "0.08", "--format", "csv",
                 "--out", str(out)])
    assert code == EXIT_PASS
    assert out.read_text().startswith("T,degree,bc,count")
