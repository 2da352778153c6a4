"""CLI contract tests: determinism, exit codes, offline/live report equality."""

import json

import pytest

from teleop.cli import main
from teleop.metrics import stability_report
from teleop.scenario import load_scenario
from teleop.simulator import run_teleop_loop
from teleop.trace import load_trace


def run_cli(*argv):
    return main(list(argv))


def test_run_writes_deterministic_traces(tmp_path, capsys):
    a = tmp_path / "a.ndjson"
    b = tmp_path / "b.ndjson"
    for out in (a, b):
        code = run_cli(
            "run", "--scenario", "free_sweep", "--seed", "7",
            "--duration", "1.0", "--output", str(out),
        )
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    summary = capsys.readouterr().out
    assert "mean factor" in summary


def test_run_contact_scenario_has_contact(tmp_path):
    out = tmp_path / "wall.ndjson"
    code = run_cli(
        "run", "--scenario", "hidden_wall_drag", "--transform", "abs",
        "--output", str(out),
    )
    assert code == 0
    trace = load_trace(out)
    assert trace.contact_mask().any()


def test_run_missing_scenario_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("run", "--scenario", "/nope/missing.scenario", "--output", "x.ndjson")
    assert exc.value.code == 1
    assert "missing.scenario" in capsys.readouterr().err


def test_run_bad_rate_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(
            "run", "--scenario", "free_sweep", "--rate", "20",
            "--output", str(tmp_path / "x.ndjson"),
        )
    assert exc.value.code == 1


def test_binary_flag_round_trips(tmp_path):
    out = tmp_path / "t.bin"
    assert run_cli(
        "run", "--scenario", "free_sweep", "--duration", "0.5",
        "--output", str(out), "--binary",
    ) == 0
    trace = load_trace(out)
    assert len(trace.records) == 100


def test_metrics_offline_equals_live(tmp_path, capsys):
    out = tmp_path / "t.ndjson"
    assert run_cli(
        "run", "--scenario", "hidden_wall_drag", "--output", str(out)
    ) == 0
    capsys.readouterr()
    assert run_cli("metrics", "--trace", str(out)) == 0
    offline = json.loads(capsys.readouterr().out)
    live = stability_report(run_teleop_loop(load_scenario("hidden_wall_drag")))
    assert offline == live.to_json_obj()


def test_metrics_truncated_trace_names_line(tmp_path, capsys):
    out = tmp_path / "t.ndjson"
    assert run_cli(
        "run", "--scenario", "free_sweep", "--duration", "0.5", "--output", str(out)
    ) == 0
    text = out.read_text()
    lines = text.splitlines()
    out.write_text("\n".join(lines[:-1] + [lines[-1][:30]]) + "\n")
    capsys.readouterr()
    assert run_cli("metrics", "--trace", str(out)) == 1
    assert f"line {len(lines)}" in capsys.readouterr().err


def test_metrics_free_motion_correlation_flagged(tmp_path, capsys):
    out = tmp_path / "free.ndjson"
    assert run_cli(
        "run", "--scenario", "free_sweep", "--duration", "1.0", "--output", str(out)
    ) == 0
    capsys.readouterr()
    assert run_cli("metrics", "--trace", str(out)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["correlation_defined"] is False
    assert report["feedback_correlation"] is None
    assert report["high_freq_energy_ratio"] is not None


def test_ablate_full_and_subset(tmp_path, capsys):
    out = tmp_path / "reports.ndjson"
    assert run_cli(
        "ablate", "--scenario", "free_sweep", "--output", str(out),
    ) == 0
    table = capsys.readouterr().out
    assert len(table.splitlines()) == 6  # header + rule + 4 rows
    reports = [json.loads(line) for line in out.read_text().splitlines()]
    assert {r["transform"] for r in reports} == {"abs", "squared", "exp", "tanh"}

    assert run_cli("ablate", "--scenario", "free_sweep", "--transforms", "abs,tanh") == 0
    assert len(capsys.readouterr().out.splitlines()) == 4  # header + rule + 2 rows


def test_ablate_repeat_identical_files(tmp_path):
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    for out in (a, b):
        assert run_cli(
            "ablate", "--scenario", "hidden_wall_drag", "--output", str(out)
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_ablate_unknown_transform_exit_1():
    assert run_cli("ablate", "--scenario", "free_sweep", "--transforms", "cubic") == 1
