import json
import logging
import math

import numpy as np
import pytest

from riemspline import cli
from riemspline.geometry import DegenerateMetricError
from riemspline.scenario import (
    ScenarioError,
    eval_expression,
    export_outputs,
    parse_scenario,
    read_trajectory_csv,
    run_scenario,
    shipped_scenario_path,
    shipped_scenarios,
    tissot_indicatrix,
    trajectory_columns,
)

MINIMAL = """
system = "two_link"
q0 = [0.0, 0.0]
qf = [1.0, 0.5]
"""

FLAT = """
system = "custom_chain"
q0 = [0.0, 0.0, 0.0]
qf = [1.0, -1.0, 2.0]
v0 = [0.5, 0.0, 0.0]
comparison = "euclidean_interpolation"
[model]
metric = "identity"
[solver]
segments = 2
steps = 10
"""

ONE_LINK = """
system = "custom_chain"
cost_mode = "actuation"
q0 = ["-pi/2"]
qf = ["-pi/4"]
[model]
task_axes = [0, 1]
[[model.link]]
a = 1.0
mass = 1.0
com = [-0.5, 0.0, 0.0]
inertia = [0.0, 0.0, 0.1]
[solver]
segments = 2
steps = 20
"""


def write(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- parsing --------------------------------------------------------------


def test_minimal_file_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.cost_mode == "acceleration" and sc.gravity is True
    assert sc.v0 == (0.0, 0.0) and sc.vf == (0.0, 0.0)
    assert (sc.t0, sc.tf) == (0.0, 1.0)
    assert (sc.solver.segments, sc.solver.steps) == (5, 40)
    assert sc.solver.tolerance == 1e-8 and sc.solver.max_iterations == 50
    assert sc.drag.type == "none" and sc.comparison == "none" and sc.force_scale == 1.0
    recorded = dict(sc.defaults)
    assert recorded["cost_mode"] == "acceleration" and recorded["solver.segments"] == 5


def test_ur5_defaults():
    sc = parse_scenario('system = "ur5"\nq0 = [0, 0, 0]\nqf = [1, 1, 1]\n')
    assert sc.fixed_wrist == (0.1, 0.1, 0.1)
    assert sc.drag.type == "joint" and sc.drag.coeffs == (1.0, 1.0, 1.0)
    assert (sc.solver.segments, sc.solver.steps) == (8, 50)


def test_pi_expressions():
    sc = parse_scenario('system = "two_link"\nq0 = ["pi/2", "-3*pi/4"]\nqf = [0.5, "2*pi - 1"]\n')
    assert sc.q0 == (math.pi / 2, -0.75 * math.pi)
    assert sc.qf == (0.5, 2 * math.pi - 1)
    assert eval_expression("-(pi**2)/4 + 1e-3") == pytest.approx(-math.pi ** 2 / 4 + 1e-3)
    for bad in ("__import__('os')", "pi/0", "sin(pi)", "1 +", "True"):
        with pytest.raises(ValueError):
            eval_expression(bad)


@pytest.mark.parametrize("text,field,line", [
    (MINIMAL + "bogus = 1\n", "bogus", 5),
    (MINIMAL + "[solver]\nsegmnts = 3\n", "solver.segmnts", 6),
    (MINIMAL + "[drag]\ntype = \"joint\"\ncoeff = 2.0\n", "drag.coeff", 7),
    ('system = "two_link"\nq0 = [0.0]\nqf = [1.0, 0.5]\n', "q0", 2),
    (MINIMAL + "tf = -1\n", "tf", 5),
    (MINIMAL + "cost_mode = \"jerk\"\n", "cost_mode", 5),
    (MINIMAL + "[solver]\ncontinuation = [0.0, 0.5]\n", "solver.continuation", 6),
    (MINIMAL + "[solver]\nsegments = 1\nsteps = 5\n", "solver.steps", 7),
])
def test_strict_validation_locates_errors(text, field, line):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.field == field
    assert info.value.line == line
    assert field in str(info.value)


def test_missing_and_malformed():
    with pytest.raises(ScenarioError, match="missing required key"):
        parse_scenario('system = "two_link"\nq0 = [0, 0]\n')
    with pytest.raises(ScenarioError, match="malformed") as info:
        parse_scenario('system = "two_link"\nq0 = [0, \n')
    assert info.value.line is not None
    with pytest.raises(ScenarioError, match="UTF-8"):
        parse_scenario(b'system = "\xff"\n')


def test_identity_metric_rejects_gravity():
    with pytest.raises(ScenarioError, match="gravity"):
        parse_scenario(FLAT.replace("comparison", "gravity = true\ncomparison"))


def test_shipped_scenarios_parse():
    names = shipped_scenarios()
    assert {"two_link_s1", "two_link_s2", "ur5_s1", "flat"} <= set(names)
    for name in names:
        parse_scenario(shipped_scenario_path(name).read_bytes(), name=name)


# --- Tissot indicatrix ----------------------------------------------------


def test_tissot_examples():
    s = tissot_indicatrix(np.eye(2), [0.0, 0.0])
    np.testing.assert_allclose(s.semi_axis_lengths, [1.0, 1.0])
    s = tissot_indicatrix(np.diag([4.0, 1.0]), [0.0, 0.0])
    np.testing.assert_allclose(s.semi_axis_lengths, [1.0, 0.5])
    np.testing.assert_allclose(np.abs(s.axes[:, 0]), [0.0, 1.0])


def test_tissot_rotation_invariance_and_order():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        g = A @ A.T + 0.1 * np.eye(3)
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        a = tissot_indicatrix(g, np.zeros(3))
        b = tissot_indicatrix(Q @ g @ Q.T, np.zeros(3))
        np.testing.assert_allclose(a.semi_axis_lengths, b.semi_axis_lengths, rtol=1e-10)
        assert np.all(np.diff(a.semi_axis_lengths) <= 0)
        # each axis has unit kinetic energy at its semi-axis length
        for k in range(3):
            v = a.semi_axis_lengths[k] * a.axes[:, k]
            assert v @ g @ v == pytest.approx(1.0)


def test_tissot_degenerate():
    with pytest.raises(DegenerateMetricError):
        tissot_indicatrix(np.diag([1.0, 0.0]), [0.0, 0.0])


# --- export ---------------------------------------------------------------


@pytest.fixture(scope="module")
def flat_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("flat")
    result = run_scenario(parse_scenario(FLAT))
    written = export_outputs(result, out)
    return result, out, written


def test_export_files(flat_run):
    result, out, written = flat_run
    assert result.converged
    assert sorted(p.name for p in written) == ["baseline.csv", "report.json", "task.csv",
                                               "tissot.csv", "trajectory.csv"]
    assert not list(out.glob(".*.tmp"))


def test_trajectory_schema_and_round_trip(flat_run):
    result, out, _ = flat_run
    header, data = read_trajectory_csv(out / "trajectory.csv")
    d = 3
    assert header == trajectory_columns(d)
    assert len(header) == 1 + 4 * d + d + 3
    traj = result.trajectory
    assert data.shape == (traj.t.size, len(header))
    np.testing.assert_array_equal(data[:, 0], traj.t)
    np.testing.assert_allclose(data[:, 1:1 + 4 * d], traj.states, rtol=1e-12, atol=0)
    assert np.all(np.diff(data[:, header.index("cost_accum")]) >= 0)


def test_flat_baseline_coincides(flat_run):
    result, out, _ = flat_run
    traj, base = result.trajectory, result.baseline
    np.testing.assert_allclose(traj.q, base.q, atol=1e-8)
    assert traj.total_cost == pytest.approx(base.total_cost, rel=1e-8)
    report = json.loads((out / "report.json").read_text())
    assert report["cost_ratio"] == pytest.approx(1.0, abs=1e-8)
    assert report["solver"]["converged"] is True


def test_tissot_export_identity(flat_run):
    _, out, _ = flat_run
    data = np.loadtxt(out / "tissot.csv", delimiter=",", skiprows=1, ndmin=2)
    assert data.shape[0] == 10
    np.testing.assert_allclose(data[:, 4:7], 1.0)


def test_custom_chain_scenario(tmp_path):
    result = run_scenario(parse_scenario(ONE_LINK))
    assert result.converged
    export_outputs(result, tmp_path, tissot_points=0)
    assert not (tmp_path / "tissot.csv").exists()
    task = np.loadtxt(tmp_path / "task.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(task[0, 1:], [0.0, -1.0], atol=1e-12)


# --- command line ---------------------------------------------------------


def test_cli_solve_and_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    path = write(tmp_path, FLAT)
    out = tmp_path / "run"
    code = cli.main(["solve", str(path), "--out", str(out), "--segments", "3", "--steps", "7",
                     "--tol", "1e-10", "--tissot", "4"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["scenario"]["solver"]["segments"] == 3
    assert report["scenario"]["solver"]["tolerance"] == 1e-10
    assert np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1).shape[0] == 22
    assert np.loadtxt(out / "tissot.csv", delimiter=",", skiprows=1).shape[0] == 4


def test_cli_force_scale_zero_removes_gravity(tmp_path, monkeypatch):
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    path = write(tmp_path, MINIMAL + "[solver]\nsegments = 2\nsteps = 10\n")
    assert cli.main(["solve", str(path), "--out", str(tmp_path / "a"), "--force-scale", "0"]) == 0
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["scenario"]["force_scale"] == 0.0
    assert report["solver"]["continuation_steps"] == 1


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "x.toml", "--segments", "0"],
    ["solve", "x.toml", "--tol", "-1"],
    ["frobnicate"],
])
def test_cli_usage_errors(argv, capsys):
    assert cli.main(argv) == 2


def test_cli_io_errors(tmp_path, monkeypatch):
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    assert cli.main(["solve", str(tmp_path / "missing.toml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    path = write(tmp_path, FLAT)
    assert cli.main(["solve", str(path), "--out", str(blocker / "sub")]) == 4


def test_cli_parse_error(tmp_path, monkeypatch):
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    assert cli.main(["solve", str(write(tmp_path, MINIMAL + "bogus = 1\n"))]) == 2


def test_log_levels(monkeypatch, capsys):
    for value, level in [("quiet", logging.ERROR), ("info", logging.INFO), ("DEBUG", logging.DEBUG)]:
        monkeypatch.setenv("RIEMSPLINE_LOG", value)
        cli.configure_logging()
        assert cli.log.level == level
    monkeypatch.setenv("RIEMSPLINE_LOG", "loud")
    import io
    stream = io.StringIO()
    cli.configure_logging(stream)
    assert cli.log.level == logging.INFO
    assert "not understood" in stream.getvalue()
    monkeypatch.delenv("RIEMSPLINE_LOG")
    cli.configure_logging()
    assert cli.log.level == logging.INFO


def test_cli_check(capsys, monkeypatch):
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
