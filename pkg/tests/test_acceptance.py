"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import dataclasses
import math
import time

import numpy as np

from riemspline import cli
from riemspline.bvp import (
    BvpProblem,
    SolverOptions,
    sample_trajectory,
    segment_hamiltonian_drift,
    solve,
    zero_costate_guess,
)
from riemspline.checks import (
    check_curvature_symmetries,
    check_drag_decomposition,
    check_musical_roundtrip,
    check_potential_hessian,
    check_product_rules,
)
from riemspline.control import CostModel, spline_residual
from riemspline.geometry import covariant_accel
from riemspline.models import euclidean_model, two_link_model
from riemspline.scenario import (
    load_scenario,
    path_length,
    run_scenario,
    shipped_scenario_path,
)

S1_Q0 = (0.5 * math.pi, -0.75 * math.pi)
S1_QF = (0.75 * math.pi, -0.75 * math.pi)


def _two_link_problem(model, mode, segments=5, steps=40, q0=S1_Q0, qf=S1_QF, v0=None, vf=None):
    return BvpProblem(model, CostModel.for_model(model, mode), q0, qf, v0, vf,
                      segments=segments, steps_per_segment=steps)


def _solve_fine(model, mode, segments, steps, **boundary):
    """Solve at a coarse resolution, then polish at the requested one."""
    coarse = _two_link_problem(model, mode, segments, 40, **boundary)
    traj, report = solve(coarse)
    assert report.converged, report.message
    fine = dataclasses.replace(coarse, steps_per_segment=steps)
    return fine, solve(fine, guess=traj.unknowns, opts=SolverOptions(continuation=(1.0,)))


def test_criterion_01_geometry_suite(record_criterion):
    start = time.perf_counter()
    results = [check_curvature_symmetries(100, 1e-5), check_product_rules(100, 1e-6),
               check_musical_roundtrip(100, 1e-12)]
    ok = all(r.passed for r in results)
    detail = "; ".join(f"{r.name} {r.detail}" for r in results)
    record_criterion(1, "geometry suite", ok, f"{detail} [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_02_flat_space_oracle(record_criterion):
    start = time.perf_counter()
    model = euclidean_model(2)
    problem = BvpProblem(model, CostModel.for_model(model), [0.0, 0.0], [1.0, 1.0],
                         segments=5, steps_per_segment=20)
    traj, report = solve(problem, guess=zero_costate_guess(problem))
    s = traj.t[:, None]
    err = float(np.max(np.abs(traj.q - (3 * s ** 2 - 2 * s ** 3))))
    ok = report.converged and report.iterations <= 2 and err < 1e-8 and traj.t.size >= 100
    record_criterion(2, "flat-space oracle", ok,
                     f"{traj.t.size} samples, max error {err:.2e}, {report.iterations} Newton "
                     f"iterations [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_03_hamiltonian_conservation(record_criterion):
    start = time.perf_counter()
    model = two_link_model(gravity=True, drag="joint", drag_coeff=1.0)
    problem, (traj, report) = _solve_fine(model, "actuation", 5, 200)
    assert report.converged
    assert problem.segments * problem.steps_per_segment == 1000
    drift = traj.hamiltonian_drift()
    # truncation error only: the coarser run doubles the step
    fine = segment_hamiltonian_drift(problem, traj.unknowns)
    coarse = segment_hamiltonian_drift(problem, traj.unknowns, steps=problem.steps_per_segment // 2)
    order = math.log2(coarse / fine)
    ok = drift < 1e-6 and order >= 3.5
    record_criterion(3, "Hamiltonian conservation", ok,
                     f"drift {drift:.2e} at 1000 steps, observed order {order:.2f} "
                     f"({coarse:.2e} -> {fine:.2e}) [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_04_potential_hessian(record_criterion):
    result = check_potential_hessian(100, 1e-6)
    record_criterion(4, "potential-Hessian identity", result.passed, result.detail)
    assert result.passed


def _spline_fit(model, traj):
    samples = {"t": traj.t, "q": traj.q, "qdot": traj.qdot, "qddot": traj.qddot}
    residual, second = spline_residual(model, samples)
    return float(np.max(np.abs(residual))), second


def test_criterion_05_spline_residual(record_criterion):
    start = time.perf_counter()
    model = two_link_model(gravity=False, drag="none")
    # rest to rest the extremal is a geodesic path on a cubic clock: a stays parallel
    # to qdot and the second covariant derivative of a vanishes, so the residual is
    # normalised by the covariant acceleration instead
    _, (traj, report) = _solve_fine(model, "acceleration", 5, 200)
    assert report.converged
    worst, _ = _spline_fit(model, traj)
    accel = covariant_accel(model.inertia, traj.q, traj.qdot, traj.qddot)
    rest = worst / float(np.max(np.abs(accel)))
    # moving endpoints make the curvature term carry the whole balance
    _, (moving, report) = _solve_fine(model, "acceleration", 5, 200, q0=(0.5, -1.0), qf=(1.2, -1.5),
                                      v0=(0.0, 2.0), vf=(1.0, -1.0))
    assert report.converged
    worst, second = _spline_fit(model, moving)
    driven = worst / float(np.max(np.abs(second)))
    ok = traj.t.size >= 1000 and moving.t.size >= 1000 and rest < 1e-3 and driven < 1e-3
    record_criterion(5, "spline-equation consistency", ok,
                     f"{traj.t.size} samples, relative residual {rest:.2e} (rest to rest, "
                     f"against |a|), {driven:.2e} (moving ends, against the second covariant "
                     f"derivative) [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_06_drag_decomposition(record_criterion):
    result = check_drag_decomposition(1000, 1e-12)
    record_criterion(6, "drag decomposition", result.passed, result.detail)
    assert result.passed


def test_criterion_07_gravity_deflection(record_criterion):
    start = time.perf_counter()
    runs = {}
    for gravity in (True, False):
        model = two_link_model(gravity=gravity)
        runs[gravity] = solve(_two_link_problem(model, "actuation"))
    (tg, rg), (tn, rn) = runs[True], runs[False]
    sep = float(np.max(np.abs(tg.q - tn.q)))
    ok = rg.converged and rn.converged and sep > 1e-3 and max(
        rg.final_residual_norm, rn.final_residual_norm) < 1e-8
    record_criterion(7, "gravity deflection", ok,
                     f"max separation {sep:.3f} rad, residuals {rg.final_residual_norm:.1e} / "
                     f"{rn.final_residual_norm:.1e} [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_08_drag_straightening(record_criterion):
    start = time.perf_counter()
    chord = float(np.linalg.norm(np.subtract(S1_QF, S1_Q0)))
    lengths = []
    for coeff in (0.0, 1.0, 10.0):
        model = two_link_model(gravity=True, drag="joint", drag_coeff=coeff)
        traj, report = solve(_two_link_problem(model, "acceleration"))
        assert report.converged, f"coefficient {coeff}: {report.message}"
        lengths.append(path_length(traj.t, traj.q, traj.qdot))
    ratios = [length / chord for length in lengths]
    ok = all(b <= a for a, b in zip(lengths, lengths[1:])) and ratios[-1] <= 1.05
    record_criterion(8, "drag straightening", ok,
                     "path/chord " + ", ".join(f"{r:.4f}" for r in ratios)
                     + f" for coefficients 0, 1, 10 [{time.perf_counter() - start:.1f} s]")
    assert ok


def test_criterion_09_cost_dominance(record_criterion):
    start = time.perf_counter()
    two = run_scenario(load_scenario(shipped_scenario_path("two_link_s1")), baseline=True)
    ur5 = run_scenario(load_scenario(shipped_scenario_path("ur5_s1")), baseline=True)
    assert two.converged and ur5.converged
    r_two = two.trajectory.total_cost / two.baseline.total_cost
    r_ur5 = ur5.trajectory.total_cost / ur5.baseline.total_cost
    ok = r_two <= 1.0 and r_ur5 <= 0.99
    record_criterion(9, "cost dominance", ok,
                     f"optimal/baseline cost two-link {r_two:.4f}, UR5 {r_ur5:.4f} "
                     f"[{time.perf_counter() - start:.1f} s]")
    assert ok


NON_CONVERGING = """
name = "stalled"
system = "two_link"
cost_mode = "acceleration"
gravity = true
q0 = ["0.5*pi", "-0.75*pi"]
qf = ["0.75*pi", "-0.75*pi"]

[solver]
segments = 2
steps = 10
max_iterations = 1
continuation = [1.0]
"""


def test_criterion_10_cli_contract(record_criterion, tmp_path, monkeypatch):
    start = time.perf_counter()
    monkeypatch.setenv("RIEMSPLINE_LOG", "quiet")
    problems = []

    pi = math.pi
    expected = {
        "two_link_s1": ((pi / 2, -3 * pi / 4), (3 * pi / 4, -3 * pi / 4)),
        "two_link_s2": ((2.0, -2.3), (2.0, -1.7)),
        "ur5_s1": ((0.1, 0.1, pi / 2), (pi / 2, -1.0, 1.0)),
    }
    for name, (q0, qf) in expected.items():
        sc = load_scenario(shipped_scenario_path(name))
        zeros = (0.0,) * len(q0)
        if (sc.q0, sc.qf, sc.v0, sc.vf) != (q0, qf, zeros, zeros):
            problems.append(f"{name} boundary conditions {sc.q0} {sc.qf} {sc.v0} {sc.vf}")
        if name == "ur5_s1" and sc.fixed_wrist != (0.1, 0.1, 0.1):
            problems.append(f"ur5 wrist {sc.fixed_wrist}")

    flat = shipped_scenario_path("flat")
    outputs = []
    out = tmp_path / "flat"
    for _ in range(2):
        code = cli.main(["solve", str(flat), "--out", str(out)])
        if code != cli.EXIT_OK:
            problems.append(f"flat run exited {code}")
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    if outputs[0] != outputs[1] or not outputs[0]:
        problems.append("reruns differ")

    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\nsystem = "two_link"\nq0 = [0, 0]\nqf = [1, 1]\nbogus = 1\n')
    stalled = tmp_path / "stalled.toml"
    stalled.write_text(NON_CONVERGING)
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    cases = {
        "parse error": (["solve", str(bad)], cli.EXIT_PARSE),
        "bad option": (["solve", str(flat), "--segments", "0"], cli.EXIT_PARSE),
        "non-convergence": (["solve", str(stalled), "--out", str(tmp_path / "s")],
                            cli.EXIT_NOT_CONVERGED),
        "missing file": (["solve", str(tmp_path / "missing.toml")], cli.EXIT_IO),
        "unwritable output": (["solve", str(flat), "--out", str(blocker / "x")], cli.EXIT_IO),
    }
    for label, (argv, want) in cases.items():
        got = cli.main(argv)
        if got != want:
            problems.append(f"{label}: exit {got}, expected {want}")

    ok = not problems
    detail = "; ".join(problems) if problems else (
        f"3 scenarios exact, byte-identical reruns ({len(outputs[0])} files), "
        f"exit codes 0/2/3/4 as documented")
    record_criterion(10, "CLI contract", ok, f"{detail} [{time.perf_counter() - start:.1f} s]")
    assert ok
