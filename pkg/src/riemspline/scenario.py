"""Declarative scenario files: parsing, running and exporting results.

A scenario is a TOML document; see ``docs/scenario-schema.md`` for every key
and its default. Numeric entries may be written as ``pi``-expressions such
as ``"0.5*pi"`` or ``"-3/4*pi"``.
"""

import ast
import json
import logging
import math
import operator
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from riemspline.bvp import BvpProblem, SolveReport, SolvedTrajectory, SolverOptions, solve
from riemspline.control import CostModel, cost_rate, external_acceleration
from riemspline.geometry import DegenerateMetricError, check_nondegenerate, christoffel_from_jet
from riemspline.models import (
    KinematicChain,
    TwoLinkParams,
    chain_model,
    euclidean_model,
    load_ur5_chain,
    two_link_model,
    ur5_model,
)
from riemspline.models.mech import DragField, MechModel

log = logging.getLogger(__name__)

SYSTEMS = ("two_link", "ur5", "custom_chain")
COST_MODES = ("acceleration", "actuation")
DRAG_TYPES = ("none", "joint", "endpoint")
COMPARISONS = ("none", "euclidean_interpolation")

_TOP_KEYS = {
    "name", "system", "cost_mode", "gravity", "q0", "qf", "v0", "vf", "t0", "tf",
    "fixed_wrist", "comparison", "output", "force_scale",
    "drag", "solver", "model", "export",
}
_DRAG_KEYS = {"type", "coeffs", "coeff"}
_SOLVER_KEYS = {"segments", "steps", "tolerance", "max_iterations", "continuation"}
_EXPORT_KEYS = {"tissot_points"}
_MODEL_KEYS = {
    "two_link": {"mass", "length", "com_offset", "rot_inertia", "gravity_accel"},
    "ur5": {"data_file"},
    "custom_chain": {"metric", "dim", "gravity_accel", "gravity_direction", "task_axes", "link"},
}
_LINK_KEYS = {"a", "alpha", "d", "theta_offset", "mass", "com", "inertia"}

_DISCRETIZATION = {"two_link": (5, 40), "ur5": (8, 50), "custom_chain": (5, 40)}


class ScenarioError(ValueError):
    """Invalid scenario document; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


# ---------------------------------------------------------------------------
# pi-expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def eval_expression(text):
    """Evaluate an arithmetic expression in numbers and ``pi``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}") from exc

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        raise ValueError(f"unsupported element in expression {text!r}")

    try:
        value = walk(tree)
    except ZeroDivisionError as exc:
        raise ValueError(f"division by zero in {text!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"expression {text!r} is not finite")
    return value


# ---------------------------------------------------------------------------
# scenario type


@dataclass(frozen=True)
class DragSpec:
    type: str = "none"
    coeffs: tuple = ()
    coeff: float = 0.0


@dataclass(frozen=True)
class SolverSpec:
    segments: int
    steps: int
    tolerance: float = 1e-8
    max_iterations: int = 50
    continuation: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)

    def options(self):
        return SolverOptions(
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            continuation=self.continuation,
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    system: str
    cost_mode: str
    gravity: bool
    drag: DragSpec
    q0: tuple
    qf: tuple
    v0: tuple
    vf: tuple
    t0: float
    tf: float
    solver: SolverSpec
    comparison: str = "none"
    output: str = "out"
    force_scale: float = 1.0
    fixed_wrist: Optional[tuple] = None
    model: dict = field(default_factory=dict)
    tissot_points: int = 10
    defaults: tuple = ()

    @property
    def dim(self):
        return len(self.q0)

    def summary(self):
        out = asdict(self)
        out.pop("defaults")
        out.pop("model")
        return out


# ---------------------------------------------------------------------------
# parsing


def _key_line(text, table, key):
    """Best-effort line number of ``key`` inside ``[table]`` (top level if None)."""
    current = None
    pattern = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        header = re.match(r"^\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?$", line)
        if header:
            current = header.group(1)
            if table is not None and key == current:
                return number
            continue
        if current == table and pattern.match(raw):
            return number
    return None


class _Reader:
    def __init__(self, text, data):
        self.text = text
        self.data = data
        self.defaults = []

    def fail(self, message, table, key):
        name = f"{table}.{key}" if table else key
        raise ScenarioError(message, field=name, line=_key_line(self.text, table, key))

    def check_keys(self, mapping, allowed, table):
        for key in mapping:
            if key not in allowed:
                self.fail("unknown key", table, key)

    def get(self, mapping, table, key, default=None, required=False):
        if key in mapping:
            return mapping[key]
        if required:
            name = f"{table}.{key}" if table else key
            raise ScenarioError("missing required key", field=name)
        self.defaults.append((f"{table}.{key}" if table else key, default))
        return default

    def number(self, mapping, table, key, default=None, required=False):
        raw = self.get(mapping, table, key, default, required)
        return self._to_float(raw, table, key)

    def _to_float(self, raw, table, key):
        if isinstance(raw, bool):
            self.fail("expected a number, got a boolean", table, key)
        if isinstance(raw, (int, float)):
            value = float(raw)
        elif isinstance(raw, str):
            try:
                value = eval_expression(raw)
            except ValueError as exc:
                self.fail(str(exc), table, key)
        else:
            self.fail(f"expected a number, got {type(raw).__name__}", table, key)
        if not math.isfinite(value):
            self.fail("value must be finite", table, key)
        return value

    def vector(self, mapping, table, key, dim, default=None, required=False):
        raw = self.get(mapping, table, key, default, required)
        if not isinstance(raw, (list, tuple)):
            self.fail("expected an array", table, key)
        values = tuple(self._to_float(v, table, key) for v in raw)
        if dim is not None and len(values) != dim:
            self.fail(f"expected {dim} entries, got {len(values)}", table, key)
        return values

    def integer(self, mapping, table, key, default, minimum=1):
        raw = self.get(mapping, table, key, default)
        if isinstance(raw, bool) or not isinstance(raw, int):
            self.fail("expected an integer", table, key)
        if raw < minimum:
            self.fail(f"must be >= {minimum}", table, key)
        return raw

    def boolean(self, mapping, table, key, default):
        raw = self.get(mapping, table, key, default)
        if not isinstance(raw, bool):
            self.fail("expected true or false", table, key)
        return raw

    def choice(self, mapping, table, key, options, default=None, required=False):
        raw = self.get(mapping, table, key, default, required)
        if isinstance(raw, str):
            raw = raw.replace("-", "_")
        if raw not in options:
            self.fail(f"must be one of {', '.join(options)}", table, key)
        return raw

    def table(self, key):
        value = self.data.get(key, {})
        if not isinstance(value, dict):
            self.fail("expected a table", None, key)
        return value


def parse_scenario(text, name="scenario"):
    """Parse and validate a scenario document.

    Every default that is filled in is recorded in ``Scenario.defaults`` so
    it can be echoed into the run log.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioError(f"scenario is not valid UTF-8: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        if match:
            line = int(match.group(1))
        else:
            # errors at end of document carry no position
            line = max(1, len(text.rstrip("\n").splitlines()))
        raise ScenarioError(f"malformed scenario: {exc}", line=line) from exc

    rd = _Reader(text, data)
    rd.check_keys(data, _TOP_KEYS, None)
    system = rd.choice(data, None, "system", SYSTEMS, required=True)
    scenario_name = data.get("name", name)
    if not isinstance(scenario_name, str):
        rd.fail("expected a string", None, "name")

    model_table = rd.table("model")
    rd.check_keys(model_table, _MODEL_KEYS[system], "model")
    model_params, dim, flat = _parse_model(rd, system, model_table)

    q0 = rd.vector(data, None, "q0", dim, required=True)
    dim = len(q0)
    qf = rd.vector(data, None, "qf", dim, required=True)
    v0 = rd.vector(data, None, "v0", dim, default=[0.0] * dim)
    vf = rd.vector(data, None, "vf", dim, default=[0.0] * dim)
    t0 = rd.number(data, None, "t0", default=0.0)
    tf = rd.number(data, None, "tf", default=1.0)
    if not tf > t0:
        rd.fail("tf must be greater than t0", None, "tf")

    cost_mode = rd.choice(data, None, "cost_mode", COST_MODES, default="acceleration")
    if flat:
        gravity = rd.boolean(data, None, "gravity", False)
        if gravity:
            rd.fail("gravity needs a kinematic chain; the identity metric has none", None, "gravity")
    else:
        gravity = rd.boolean(data, None, "gravity", True)

    fixed_wrist = None
    if system == "ur5":
        fixed_wrist = rd.vector(data, None, "fixed_wrist", 3, default=[0.1, 0.1, 0.1])
    elif "fixed_wrist" in data:
        rd.fail("only valid for the ur5 system", None, "fixed_wrist")

    drag = _parse_drag(rd, system, dim, flat)

    solver_table = rd.table("solver")
    rd.check_keys(solver_table, _SOLVER_KEYS, "solver")
    seg_default, steps_default = _DISCRETIZATION[system]
    segments = rd.integer(solver_table, "solver", "segments", seg_default)
    steps = rd.integer(solver_table, "solver", "steps", steps_default)
    if segments * steps < 10:
        rd.fail("segments * steps must be at least 10", "solver", "steps")
    tolerance = rd.number(solver_table, "solver", "tolerance", default=1e-8)
    if tolerance <= 0:
        rd.fail("must be positive", "solver", "tolerance")
    max_iterations = rd.integer(solver_table, "solver", "max_iterations", 50)
    continuation = rd.vector(solver_table, "solver", "continuation", None,
                             default=[0.0, 0.25, 0.5, 0.75, 1.0])
    if not continuation or continuation[-1] != 1.0 or any(s < 0 for s in continuation):
        rd.fail("stages must be non-negative and end at 1", "solver", "continuation")
    solver = SolverSpec(segments, steps, tolerance, max_iterations, continuation)

    export_table = rd.table("export")
    rd.check_keys(export_table, _EXPORT_KEYS, "export")
    tissot_points = rd.integer(export_table, "export", "tissot_points", 10)

    comparison = rd.choice(data, None, "comparison", COMPARISONS, default="none")
    output = rd.get(data, None, "output", "out")
    if not isinstance(output, str) or not output:
        rd.fail("expected a non-empty path string", None, "output")
    force_scale = rd.number(data, None, "force_scale", default=1.0)
    if force_scale < 0:
        rd.fail("must be non-negative", None, "force_scale")

    return Scenario(
        name=scenario_name,
        system=system,
        cost_mode=cost_mode,
        gravity=gravity,
        drag=drag,
        q0=q0, qf=qf, v0=v0, vf=vf, t0=t0, tf=tf,
        solver=solver,
        comparison=comparison,
        output=output,
        force_scale=force_scale,
        fixed_wrist=fixed_wrist,
        model=model_params,
        tissot_points=tissot_points,
        defaults=tuple(rd.defaults),
    )


def _parse_model(rd, system, table):
    """Returns (model parameters, dimension or None, flat metric flag)."""
    if system == "two_link":
        params = {}
        for key in ("mass", "length", "gravity_accel"):
            default = {"mass": 1.0, "length": 1.0, "gravity_accel": 9.81}[key]
            params[key] = rd.number(table, "model", key, default=default)
        for key in ("com_offset", "rot_inertia"):
            if key in table:
                params[key] = rd.number(table, "model", key)
        if params["mass"] <= 0 or params["length"] <= 0:
            rd.fail("mass and length must be positive", "model", "mass" if params["mass"] <= 0 else "length")
        return params, 2, False
    if system == "ur5":
        params = {}
        if "data_file" in table:
            if not isinstance(table["data_file"], str):
                rd.fail("expected a path string", "model", "data_file")
            params["data_file"] = table["data_file"]
        return params, 3, False

    metric = rd.choice(table, "model", "metric", ("identity", "chain"), default="chain")
    if metric == "identity":
        if "link" in table:
            rd.fail("links are not used with the identity metric", "model", "link")
        dim = rd.integer(table, "model", "dim", None) if "dim" in table else None
        return {"metric": "identity", "dim": dim}, dim, True
    links = table.get("link")
    if not isinstance(links, list) or not links:
        raise ScenarioError("custom chain needs at least one [[model.link]] record", field="model.link")
    records = []
    for i, rec in enumerate(links):
        rd.check_keys(rec, _LINK_KEYS, "model.link")
        entry = {}
        for key in ("a", "alpha", "d", "theta_offset", "mass"):
            entry[key] = rd.number(rec, "model.link", key, required=key == "mass", default=0.0)
        entry["com"] = rd.vector(rec, "model.link", "com", 3, default=[0.0, 0.0, 0.0])
        entry["inertia"] = rd.vector(rec, "model.link", "inertia", 3, default=[0.0, 0.0, 0.0])
        records.append(entry)
    params = {
        "metric": "chain",
        "links": records,
        "gravity_accel": rd.number(table, "model", "gravity_accel", default=9.81),
        "gravity_direction": rd.vector(table, "model", "gravity_direction", 3, default=[0.0, 0.0, -1.0]),
        "task_axes": tuple(int(v) for v in rd.vector(table, "model", "task_axes", None, default=[0, 1, 2])),
    }
    return params, len(records), False


def _parse_drag(rd, system, dim, flat):
    table = rd.table("drag")
    rd.check_keys(table, _DRAG_KEYS, "drag")
    default_type = "joint" if system == "ur5" else "none"
    kind = rd.choice(table, "drag", "type", DRAG_TYPES, default=default_type)
    if kind == "joint":
        raw = rd.get(table, "drag", "coeffs", 1.0)
        if isinstance(raw, list):
            coeffs = rd.vector(table, "drag", "coeffs", dim)
        else:
            coeffs = (rd._to_float(raw, "drag", "coeffs"),) * dim
        if any(c < 0 for c in coeffs):
            rd.fail("coefficients must be non-negative", "drag", "coeffs")
        if "coeff" in table:
            rd.fail("use 'coeffs' for joint drag", "drag", "coeff")
        return DragSpec("joint", coeffs, 0.0)
    if kind == "endpoint":
        if flat:
            rd.fail("endpoint drag needs a kinematic chain", "drag", "type")
        coeff = rd.number(table, "drag", "coeff", default=1.0)
        if coeff < 0:
            rd.fail("coefficient must be non-negative", "drag", "coeff")
        if "coeffs" in table:
            rd.fail("use 'coeff' for endpoint drag", "drag", "coeffs")
        return DragSpec("endpoint", (), coeff)
    for key in ("coeffs", "coeff"):
        if key in table:
            rd.fail("drag type 'none' takes no coefficients", "drag", key)
    return DragSpec()


def load_scenario(path):
    """Read and parse a scenario file; I/O failures surface as ``OSError``."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_scenario(raw, name=path.stem)


def shipped_scenarios():
    """Names of the scenario files packaged with the library."""
    from importlib import resources
    root = resources.files("riemspline.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def shipped_scenario_path(name):
    from importlib import resources
    path = resources.files("riemspline.scenarios").joinpath(f"{name}.toml")
    if not path.is_file():
        raise FileNotFoundError(f"no shipped scenario named {name!r}")
    return path


# ---------------------------------------------------------------------------
# building and running


def build_model(scenario):
    drag = scenario.drag
    if scenario.system == "two_link":
        params = TwoLinkParams(**scenario.model)
        model = two_link_model(params, gravity=scenario.gravity, drag=drag.type,
                               drag_coeffs=drag.coeffs or None, drag_coeff=drag.coeff)
    elif scenario.system == "ur5":
        path = scenario.model.get("data_file")
        chain = load_ur5_chain(path)
        if drag.type == "endpoint":
            model = ur5_model(scenario.fixed_wrist, gravity=scenario.gravity, friction=drag.coeff,
                              chain=chain, drag="endpoint")
        else:
            model = ur5_model(scenario.fixed_wrist, gravity=scenario.gravity,
                              friction=drag.coeffs or 0.0, chain=chain, drag=drag.type)
    elif scenario.model.get("metric") == "identity":
        model = euclidean_model(scenario.dim)
        if drag.type == "joint":
            model = replace(
                model, drag=DragField.constant(np.diag(drag.coeffs)), drag_mode="joint")
    else:
        links = scenario.model["links"]
        chain = KinematicChain(
            dh=np.array([[r["a"], r["alpha"], r["d"], r["theta_offset"]] for r in links]),
            link_masses=np.array([r["mass"] for r in links]),
            link_coms=np.array([r["com"] for r in links]),
            link_rot_inertias=np.array([np.diag(r["inertia"]) for r in links]),
            gravity_accel=scenario.model["gravity_accel"],
            gravity_direction=np.array(scenario.model["gravity_direction"]),
            task_axes=scenario.model["task_axes"],
        )
        model = chain_model(chain, gravity=scenario.gravity, drag=drag.type,
                            drag_coeffs=drag.coeffs or None, drag_coeff=drag.coeff)
    return model.scaled(scenario.force_scale)


class Baseline(NamedTuple):
    """Cubic Hermite interpolant executed through inverse dynamics."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    u: np.ndarray
    cost_rate: np.ndarray
    cost_accum: np.ndarray

    @property
    def total_cost(self):
        return float(self.cost_accum[-1])


def hermite_interpolant(q0, v0, qf, vf, t0, tf, t):
    """Cubic Hermite curve with its first and second time derivatives."""
    q0, v0, qf, vf = (np.asarray(v, dtype=float) for v in (q0, v0, qf, vf))
    span = tf - t0
    s = ((np.asarray(t, dtype=float) - t0) / span)[:, None]
    dq = qf - q0
    c1 = span * v0
    c2 = 3.0 * dq - span * (2.0 * v0 + vf)
    c3 = -2.0 * dq + span * (v0 + vf)
    q = q0 + s * (c1 + s * (c2 + s * c3))
    qdot = (c1 + s * (2.0 * c2 + 3.0 * s * c3)) / span
    qddot = (2.0 * c2 + 6.0 * s * c3) / span ** 2
    return q, qdot, qddot


def euclidean_interpolation(model, cost, problem, t):
    """Baseline controls ``u = cov_accel - a_ext`` along the Hermite interpolant."""
    q, qdot, qddot = hermite_interpolant(problem.q0, problem.v0, problem.qf, problem.vf,
                                         problem.t0, problem.tf, t)
    jet = model.jet(q)
    gamma = christoffel_from_jet(check_nondegenerate(jet.g), jet.dg)
    cov = qddot + np.einsum("...ijk,...j,...k->...i", gamma, qdot, qdot)
    u = cov - external_acceleration(model, q, qdot).accel
    rate = cost_rate(cost, q, u)
    accum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    return Baseline(np.asarray(t, dtype=float), q, qdot, qddot, u, rate, accum)


@dataclass
class RunResult:
    scenario: Scenario
    model: MechModel
    cost: CostModel
    problem: BvpProblem
    trajectory: Optional[SolvedTrajectory]
    report: SolveReport
    baseline: Optional[Baseline] = None

    @property
    def converged(self):
        return self.report.converged


def run_scenario(scenario, baseline=None):
    """Solve the scenario; also build the interpolation baseline when requested."""
    for key, value in scenario.defaults:
        log.info("default %s = %r", key, value)
    model = build_model(scenario)
    cost = CostModel.for_model(model, scenario.cost_mode)
    problem = BvpProblem(
        model, cost, scenario.q0, scenario.qf, scenario.v0, scenario.vf,
        scenario.t0, scenario.tf, scenario.solver.segments, scenario.solver.steps,
    )
    log.info("solving %s: system %s, cost %s, %d x %d RK4 steps", scenario.name, scenario.system,
             scenario.cost_mode, problem.segments, problem.steps_per_segment)
    trajectory, report = solve(problem, opts=scenario.solver.options())
    log.info("solver: %s after %d iterations, residual %.3e", report.message,
             report.iterations, report.final_residual_norm)
    want = scenario.comparison == "euclidean_interpolation" if baseline is None else baseline
    base = None
    if want and trajectory is not None:
        base = euclidean_interpolation(model, cost, problem, trajectory.t)
        log.info("cost: optimal %.6g, interpolation baseline %.6g",
                 trajectory.total_cost, base.total_cost)
    return RunResult(scenario, model, cost, problem, trajectory, report, base)


# ---------------------------------------------------------------------------
# Tissot indicatrix


class TissotSample(NamedTuple):
    q: np.ndarray
    eigenvalues: np.ndarray
    axes: np.ndarray
    semi_axis_lengths: np.ndarray


def tissot_indicatrix(metric, q):
    """Unit kinetic-energy ellipse of ``metric`` at ``q``.

    ``axes[:, k]`` is the direction of the ``k``-th semi-axis, whose length
    ``1 / sqrt(eigenvalue)`` is the speed with ``qdot' g qdot = 1``. Semi-axes
    are sorted longest first.
    """
    q = np.asarray(q, dtype=float)
    g = metric(q) if callable(metric) else np.asarray(metric, dtype=float)
    check_nondegenerate(g)
    w, v = np.linalg.eigh(g)
    if w[0] <= 0:
        raise DegenerateMetricError(w[0], w[-1])
    # eigh sorts ascending, so the longest semi-axis comes first already
    return TissotSample(q, w, v, 1.0 / np.sqrt(w))


# ---------------------------------------------------------------------------
# export


def _fmt(value):
    return format(float(value), ".17g")


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def trajectory_columns(dim):
    names = ["t"]
    for block in ("q", "qdot", "lambda", "mu", "u"):
        names.extend(f"{block}{i + 1}" for i in range(dim))
    return names + ["cost_rate", "cost_accum", "hamiltonian"]


def path_length(t, q, qdot, tensor=None):
    """Length of a sampled curve under the identity or a (semi-)metric field."""
    if tensor is None:
        speed = np.linalg.norm(qdot, axis=-1)
    else:
        D = tensor(q)
        speed = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", qdot, D, qdot), 0.0))
    return float(np.sum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t)))


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def summary_dict(result):
    traj = result.trajectory
    model = result.model
    out = {
        "scenario": result.scenario.summary(),
        "solver": result.report.as_dict(),
        "total_cost": None,
        "path_length": None,
        "baseline": None,
    }
    if traj is not None:
        out["total_cost"] = traj.total_cost
        out["path_length"] = {
            "euclidean": path_length(traj.t, traj.q, traj.qdot),
            "drag": path_length(traj.t, traj.q, traj.qdot, model.drag),
        }
    if result.baseline is not None:
        b = result.baseline
        out["baseline"] = {
            "kind": "euclidean_interpolation",
            "total_cost": b.total_cost,
            "path_length": {
                "euclidean": path_length(b.t, b.q, b.qdot),
                "drag": path_length(b.t, b.q, b.qdot, model.drag),
            },
        }
        if traj is not None and b.total_cost > 0:
            out["cost_ratio"] = traj.total_cost / b.total_cost
    return _clean(out)


def export_outputs(result, outdir=None, tissot_points=None):
    """Write ``report.json`` and, when a trajectory exists, the CSV files.

    Returns the list of written paths. Every file is written to a temporary
    name first and renamed into place.
    """
    scenario = result.scenario
    outdir = Path(scenario.output if outdir is None else outdir)
    tissot_points = scenario.tissot_points if tissot_points is None else int(tissot_points)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = outdir / "report.json"
    _atomic_write(report_path, json.dumps(summary_dict(result), indent=2, sort_keys=True) + "\n")
    written.append(report_path)

    traj = result.trajectory
    if traj is None or not result.report.converged:
        return written
    d = traj.dim
    model = result.model

    rows = np.column_stack([traj.t, traj.states, traj.u, traj.cost_rate, traj.cost_accum, traj.hamiltonian])
    path = outdir / "trajectory.csv"
    _atomic_write(path, _csv(trajectory_columns(d), rows))
    written.append(path)

    task = model.task_position(traj.q)
    axes = "xyz" if task.shape[-1] <= 3 else None
    names = [axes[i] if axes else f"p{i + 1}" for i in range(task.shape[-1])]
    path = outdir / "task.csv"
    _atomic_write(path, _csv(["t"] + names, np.column_stack([traj.t, task])))
    written.append(path)

    if tissot_points > 0:
        idx = np.unique(np.round(np.linspace(0, traj.t.size - 1, tissot_points)).astype(int))
        header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"semi_axis{k + 1}" for k in range(d)]
        header += [f"axis{k + 1}_{i + 1}" for k in range(d) for i in range(d)]
        rows = []
        for i in idx:
            sample = tissot_indicatrix(model.inertia, traj.q[i])
            rows.append(np.concatenate([[traj.t[i]], traj.q[i], sample.semi_axis_lengths,
                                        sample.axes.T.reshape(-1)]))
        path = outdir / "tissot.csv"
        _atomic_write(path, _csv(header, rows))
        written.append(path)

    if result.baseline is not None:
        b = result.baseline
        header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"qdot{i + 1}" for i in range(d)]
        header += [f"u{i + 1}" for i in range(d)] + ["cost_rate", "cost_accum"]
        rows = np.column_stack([b.t, b.q, b.qdot, b.u, b.cost_rate, b.cost_accum])
        path = outdir / "baseline.csv"
        _atomic_write(path, _csv(header, rows))
        written.append(path)
    return written


def read_trajectory_csv(path):
    """Load an exported ``trajectory.csv`` as ``(header, array)``."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
