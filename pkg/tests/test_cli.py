import json

import numpy as np
import pytest

from remshare import cli
from remshare.model import TEST_PANEL
from remshare.persist import read_table

SIMULATE = """
seed = 5
arrival { rate = 0.8 }
sim { horizon = 30.0 snapshot_times = [10, 20] initial = [1.0, 2.0, 0.5] }
"""

HEAVY = """
heavy_traffic = true
theta = [[0.5, 1.0], [1.5, 1.0]]
fluid { dt = 0.01 horizon = 0.2 }
"""

PICARD = """
theta = [[1.0, 1.0], [3.0, 1.0]]
arrival { rate = 0.0 }
fluid { dt = 0.01 horizon = 0.1 floor = 0.4 }
"""

SCALING = """
seed = 13
heavy_traffic = true
theta = [[0.5, 1.0], [1.5, 1.0]]
fluid { dt = 0.05 }
scaling { r = [2, 4] replications = 2 checkpoints = [0.25, 0.5] }
"""


def run(tmp_path, name, *args, config=None):
    output = tmp_path / name
    argv = list(args) + ["--output", str(output)]

    if config is not None:
        source = tmp_path / (name + ".conf")
        source.write_text(config)
        argv += ["--config", str(source)]

    return cli.main(argv), output


def read_json(path):
    return json.loads(path.read_text())


def test_simulate_and_rerun_from_manifest(tmp_path, capsys):
    code, first = run(tmp_path, "first", "simulate", config=SIMULATE)

    assert code == cli.EXIT_OK
    assert sorted(p.name for p in first.iterdir()) == [
        "events.csv",
        "manifest.json",
        "series.csv",
        "snapshots.csv",
    ]
    assert capsys.readouterr().out.startswith("t=30.0 E=")

    manifest = read_json(first / "manifest.json")
    assert manifest["seed"] == 5
    assert manifest["subcommand"] == "simulate"
    assert set(manifest["versions"]) == {"remshare", "numpy", "scipy", "trio", "python"}

    second = tmp_path / "second"
    code = cli.main(
        ["simulate", "--config", str(first / "manifest.json"), "--output", str(second)]
    )

    assert code == cli.EXIT_OK

    for name in ("events.csv", "series.csv", "snapshots.csv"):
        assert (second / name).read_bytes() == (first / name).read_bytes()


def test_seed_override(tmp_path):
    _, base = run(tmp_path, "base", "simulate", config=SIMULATE)
    _, moved = run(tmp_path, "moved", "simulate", "--seed", "6", config=SIMULATE)

    assert read_json(moved / "manifest.json")["seed"] == 6
    assert (moved / "events.csv").read_text() != (base / "events.csv").read_text()

    code, bad = run(tmp_path, "bad", "simulate", "--seed", "-1", config=SIMULATE)
    assert code == cli.EXIT_INPUT
    assert read_json(bad / "error.json")["issues"][0]["path"] == "seed"


def test_fluid_in_heavy_traffic(tmp_path):
    code, output = run(tmp_path, "fluid", "fluid", config=HEAVY)

    assert code == cli.EXIT_OK

    rows = read_table((output / "workload.csv").read_text())
    workloads = np.array([float(row["workload"]) for row in rows])

    assert len(rows) == 21
    assert np.max(np.abs(workloads - 2.0)) <= 1e-6

    diagnostics = read_json(output / "diagnostics.json")
    assert diagnostics["steps"] == 20
    assert sorted(diagnostics["residuals"]) == sorted(g.name for g in TEST_PANEL)


def test_fluid_floor_violation(tmp_path):
    config = 'theta = [[0.5, 1.0]]\narrival { rate = 0.0 }\nfluid { dt = 0.01 horizon = 1.0 floor = 0.3 }'
    code, output = run(tmp_path, "floor", "fluid", config=config)

    assert code == cli.EXIT_NUMERICAL

    error = read_json(output / "error.json")
    assert error["error"] == "FloorViolationError"
    assert 0.1 < error["time"] < 0.2
    assert (output / "path.csv").exists()
    assert not (output / "manifest.json").exists()


def test_picard(tmp_path):
    code, output = run(tmp_path, "picard", "picard", config=PICARD)

    assert code == cli.EXIT_OK

    diagnostics = read_json(output / "diagnostics.json")
    assert diagnostics["window_steps"] == 10
    assert len(diagnostics["windows"]) == 1
    assert diagnostics["iterations"] >= 2
    assert (output / "path.csv").exists()


def test_picard_gives_up(tmp_path):
    code, output = run(tmp_path, "stuck", "picard", config=PICARD + "picard { max_iterations = 0 }")

    assert code == cli.EXIT_NUMERICAL

    error = read_json(output / "error.json")
    assert error["error"] == "NonConvergenceError"
    assert error["exit_code"] == 2
    assert error["diagnostics"]["iterations"] == 0


def test_bad_config(tmp_path):
    code, output = run(tmp_path, "bad", "simulate", config="seed = 1\nbogus = 2\nsim { horizon = 0 }")

    assert code == cli.EXIT_INPUT

    error = read_json(output / "error.json")
    assert error["error"] == "ConfigError"
    assert [(issue["line"], issue["path"]) for issue in error["issues"]] == [(2, "bogus"), (3, "sim")]


def test_missing_config(tmp_path):
    code, output = run(tmp_path, "bare", "simulate")

    assert code == cli.EXIT_INPUT
    assert "needs --config" in read_json(output / "error.json")["message"]

    code, output = run(tmp_path, "gone", "simulate", "--config", str(tmp_path / "nowhere.conf"))
    assert code == cli.EXIT_INPUT
    assert "cannot read" in read_json(output / "error.json")["message"]


def test_distance(tmp_path, capsys):
    one = tmp_path / "one.csv"
    one.write_text("location,mass\n1,1\n3,0.5\n")
    other = tmp_path / "other.csv"
    other.write_text("location,mass\n1.5,1\n3,0.5\n")

    code, output = run(tmp_path, "same", "distance", str(one), str(one))

    assert code == cli.EXIT_OK
    assert capsys.readouterr().out.strip() == "0"
    assert read_json(output / "distance.json")["distance"] == 0.0

    code, _ = run(tmp_path, "apart", "distance", str(one), str(other))

    assert code == cli.EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(0.5, abs=1e-9)

    code, output = run(tmp_path, "missing", "distance", str(one), str(tmp_path / "none.csv"))
    assert code == cli.EXIT_INPUT
    assert read_json(output / "error.json")["error"] == "MeasureError"


def test_scaling_test_reruns_from_manifest(tmp_path, capsys):
    code, first = run(tmp_path, "first", "scaling-test", config=SCALING)

    assert code == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("verdict: ")

    summary = read_json(first / "summary.json")
    assert summary["runtime"] >= 0

    second = tmp_path / "second"
    code = cli.main(
        ["scaling-test", "--config", str(first / "manifest.json"), "--output", str(second)]
    )

    assert code == cli.EXIT_OK
    assert (second / "report.csv").read_bytes() == (first / "report.csv").read_bytes()


def test_scaling_test_off_heavy_traffic(tmp_path):
    config = "theta = [[1.0, 1.0]]\narrival { rate = 0.5 }\n"
    code, output = run(tmp_path, "light", "scaling-test", config=config)

    assert code == cli.EXIT_INPUT

    error = read_json(output / "error.json")
    assert error["error"] == "HarnessError"
    assert not (output / "manifest.json").exists()


def test_picard_without_a_floor(tmp_path):
    bare = "theta = [[1.0, 1.0], [3.0, 1.0]]\narrival { rate = 0.0 }\n"

    code, output = run(tmp_path, "stuck", "picard", config=bare + "picard { max_iterations = 0 }")

    assert code == cli.EXIT_NUMERICAL
    assert read_json(output / "error.json")["error"] == "NonConvergenceError"

    code, output = run(tmp_path, "short", "picard", config=bare + "fluid { dt = 0.01 horizon = 0.05 }")

    assert code == cli.EXIT_OK

    diagnostics = read_json(output / "diagnostics.json")
    assert diagnostics["window_steps"] >= 1
    assert diagnostics["floor"] > 0
