import json
import os

from app.cli import EXIT_AUDIT, EXIT_INVALID, EXIT_OK, main


def test_presets_command(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "verify_supercritical" in capsys.readouterr().out.split()


def test_simulate_with_flag_overrides(output_dir, capsys):
    code = main(["simulate", "simulate_damped", "--lambda", "50", "--output-dir", output_dir, "--no-registry"])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["exit_code"] == 0
    with open(os.path.join(output_dir, "scenario.json")) as handle:
        assert json.load(handle)["parameters"]["lambda"] == 50.0


def test_subcommand_must_match_operation(output_dir, capsys):
    code = main(["verify", "simulate_damped", "--output-dir", output_dir, "--no-registry"])
    assert code == EXIT_INVALID
    assert "error:" in capsys.readouterr().err


def test_missing_scenario_is_invalid(tmp_path):
    assert main(["run", str(tmp_path / "missing.yaml"), "--no-registry"]) == EXIT_INVALID


def test_failed_bound_sets_exit_code(output_dir, capsys):
    code = main(["verify", "verify_supercritical", "--delta", "0.01", "--output-dir", output_dir, "--no-registry"])
    assert code == EXIT_AUDIT
    assert "supercritical-threshold" in capsys.readouterr().err


def test_run_registers_by_default(output_dir, capsys):
    assert main(["run", "verify_supercritical", "--output-dir", output_dir]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["run_id"]


def test_export_command(output_dir, capsys):
    assert main(["export", "verify_subcritical", "--output-dir", output_dir]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert os.path.join(output_dir, "coefficient.csv") in printed
