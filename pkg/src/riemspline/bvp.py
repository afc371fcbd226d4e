"""Fixed-step RK4 integration and damped-Newton multiple shooting."""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from riemspline.control import (
    CostModel,
    controls_from_packed,
    extremal_rhs,
    hamiltonian_from_packed,
    split_state,
)

log = logging.getLogger(__name__)

DEFAULT_CONTINUATION = (0.0, 0.25, 0.5, 0.75, 1.0)


class BlowUpError(FloatingPointError):
    """The integrated state became non-finite."""

    def __init__(self, time):
        self.time = float(time)
        super().__init__(f"blow-up: non-finite state at t = {self.time:.6g}")


def integrate(rhs, state0, t0, tf, steps, keep_all=True):
    """Classical fourth-order Runge-Kutta with ``steps`` equal steps.

    ``rhs(t, x)`` may act on a batch; ``state0`` has shape ``(..., n)``.
    Returns ``(t, states)`` with ``states`` of shape ``(steps + 1, ..., n)``,
    or only the final state when ``keep_all`` is false.
    """
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(state0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise BlowUpError(t0)
    h = (tf - t0) / steps
    times = t0 + h * np.arange(steps + 1)
    times[-1] = tf
    out = [x] if keep_all else None
    for i in range(steps):
        t = times[i]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                k1 = rhs(t, x)
                k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
                k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
                k4 = rhs(t + h, x + h * k3)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            raise BlowUpError(t) from exc
        if not np.all(np.isfinite(x)):
            raise BlowUpError(times[i + 1])
        if keep_all:
            out.append(x)
    if keep_all:
        return times, np.stack(out)
    return times, x


@dataclass(frozen=True)
class BvpProblem:
    model: object
    cost: CostModel
    q0: np.ndarray
    qf: np.ndarray
    v0: Optional[np.ndarray] = None
    vf: Optional[np.ndarray] = None
    t0: float = 0.0
    tf: float = 1.0
    segments: int = 5
    steps_per_segment: int = 40

    def __post_init__(self):
        d = self.model.dim
        for name in ("q0", "qf", "v0", "vf"):
            val = getattr(self, name)
            val = np.zeros(d) if val is None else np.asarray(val, dtype=float).reshape(-1)
            if val.shape != (d,):
                raise ValueError(f"{name} has {val.size} entries, system dimension is {d}")
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not self.tf > self.t0:
            raise ValueError("tf must be greater than t0")
        if self.segments < 1 or self.steps_per_segment < 1:
            raise ValueError("segments and steps_per_segment must be >= 1")
        if self.segments * self.steps_per_segment < 10:
            raise ValueError("need at least 10 integration steps in total")

    @property
    def dim(self):
        return self.model.dim

    @property
    def n_unknowns(self):
        d = self.dim
        return 2 * d + 4 * d * (self.segments - 1)

    @property
    def segment_duration(self):
        return (self.tf - self.t0) / self.segments

    def with_model(self, model):
        return BvpProblem(model, self.cost, self.q0, self.qf, self.v0, self.vf,
                          self.t0, self.tf, self.segments, self.steps_per_segment)


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 50
    continuation: tuple = DEFAULT_CONTINUATION
    fd_step: float = 1e-7
    min_step: float = 2.0 ** -20

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        stages = tuple(float(s) for s in self.continuation)
        if not stages or stages[-1] != 1.0:
            raise ValueError("continuation must end at force scale 1")
        object.__setattr__(self, "continuation", stages)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    continuation_steps: int
    hamiltonian_drift: float = float("nan")
    message: str = ""
    stage_iterations: list = field(default_factory=list)

    def as_dict(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual_norm": self.final_residual_norm,
            "continuation_steps": self.continuation_steps,
            "hamiltonian_drift": self.hamiltonian_drift,
            "message": self.message,
            "stage_iterations": list(self.stage_iterations),
        }


@dataclass
class SolvedTrajectory:
    """Densely sampled extremal with controls and running cost."""

    t: np.ndarray
    states: np.ndarray
    u: np.ndarray
    cost_rate: np.ndarray
    cost_accum: np.ndarray
    hamiltonian: np.ndarray
    qddot: np.ndarray
    unknowns: np.ndarray = None

    @property
    def dim(self):
        return self.states.shape[-1] // 4

    @property
    def q(self):
        return split_state(self.states)[0]

    @property
    def qdot(self):
        return split_state(self.states)[1]

    @property
    def lam(self):
        return split_state(self.states)[2]

    @property
    def mu(self):
        return split_state(self.states)[3]

    @property
    def total_cost(self):
        return float(self.cost_accum[-1])

    def hamiltonian_drift(self):
        h0 = self.hamiltonian[0]
        return float(np.max(np.abs(self.hamiltonian - h0)) / (1.0 + abs(h0)))


# ---------------------------------------------------------------------------
# shooting


def segment_starts(problem, unknowns):
    """Initial extremal states ``(segments, 4 d)`` encoded by ``unknowns``."""
    d = problem.dim
    x = np.asarray(unknowns, dtype=float)
    if x.shape != (problem.n_unknowns,):
        raise ValueError(f"expected {problem.n_unknowns} unknowns, got shape {x.shape}")
    first = np.concatenate([problem.q0, problem.v0, x[: 2 * d]])
    rest = x[2 * d:].reshape(problem.segments - 1, 4 * d)
    return np.vstack([first, rest])


def _flow(problem, starts, keep_all=False):
    model, mode = problem.model, problem.cost.mode

    def rhs(t, x):
        return extremal_rhs(model, mode, x)

    return integrate(rhs, starts, 0.0, problem.segment_duration, problem.steps_per_segment, keep_all)[1]


def _assemble(problem, starts, ends):
    d = problem.dim
    defects = ends[:-1] - starts[1:]
    terminal = np.concatenate([ends[-1, :d] - problem.qf, ends[-1, d:2 * d] - problem.vf])
    return np.concatenate([defects.reshape(-1), terminal])


def shooting_residual(problem, unknowns):
    """Continuity defects of all segments followed by the terminal defects."""
    starts = segment_starts(problem, unknowns)
    return _assemble(problem, starts, _flow(problem, starts))


def segment_hamiltonian_drift(problem, unknowns, steps=None):
    """Largest relative Hamiltonian change inside any single segment.

    Junction defects are excluded, so this isolates the integrator's
    truncation error; ``steps`` overrides the per-segment step count.
    """
    if steps is not None:
        problem = replace(problem, steps_per_segment=int(steps))
    states = _flow(problem, segment_starts(problem, unknowns), keep_all=True)
    ham = hamiltonian_from_packed(problem.model, problem.cost.mode, states)
    return float(np.max(np.abs(ham - ham[0])) / (1.0 + np.max(np.abs(ham[0]))))


def _column_owner(problem):
    """For each unknown: (segment index, component index in the 4 d state)."""
    d = problem.dim
    owners = [(0, 2 * d + c) for c in range(2 * d)]
    for s in range(1, problem.segments):
        owners.extend((s, c) for c in range(4 * d))
    return owners


def shooting_jacobian(problem, unknowns, fd_step=1e-7, base=None):
    """Forward-difference Jacobian of :func:`shooting_residual`.

    Each perturbed unknown only moves its own segment, so all perturbed
    segments are integrated together in one batch; each column is then
    assembled exactly as a serial residual evaluation would be.
    """
    x = np.asarray(unknowns, dtype=float)
    starts = segment_starts(problem, x)
    owners = _column_owner(problem)
    steps = fd_step * (1.0 + np.abs(x))
    pert_starts = np.empty((len(owners), starts.shape[1]))
    for j, (s, c) in enumerate(owners):
        xj = x.copy()
        xj[j] += steps[j]
        pert_starts[j] = segment_starts(problem, xj)[s]
    batch = np.vstack([starts, pert_starts])
    ends_all = _flow(problem, batch)
    ends = ends_all[: problem.segments]
    pert_ends = ends_all[problem.segments:]
    r0 = _assemble(problem, starts, ends) if base is None else base
    J = np.empty((r0.size, x.size))
    for j, (s, _) in enumerate(owners):
        sj = starts.copy()
        ej = ends.copy()
        sj[s] = pert_starts[j]
        ej[s] = pert_ends[j]
        J[:, j] = (_assemble(problem, sj, ej) - r0) / steps[j]
    return J, r0


def initial_guess(problem):
    """Extremal of the flat, force-free problem sampled at the segment starts.

    This is the cubic Hermite interpolant of the boundary data with
    costates ``lam = 2 qddot`` and ``mu = -2 qdddot``; for zero boundary
    velocities it runs along the straight chord from ``q0`` to ``qf``.
    """
    span = problem.tf - problem.t0
    dq = problem.qf - problem.q0
    c1 = span * problem.v0
    c2 = 3.0 * dq - span * (2.0 * problem.v0 + problem.vf)
    c3 = -2.0 * dq + span * (problem.v0 + problem.vf)
    parts = []
    for k in range(problem.segments):
        s = k / problem.segments
        q = problem.q0 + s * (c1 + s * (c2 + s * c3))
        qdot = (c1 + s * (2.0 * c2 + 3.0 * s * c3)) / span
        lam = 2.0 * (2.0 * c2 + 6.0 * s * c3) / span ** 2
        mu = -12.0 * c3 / span ** 3
        parts.append(np.concatenate([lam, mu] if k == 0 else [q, qdot, lam, mu]))
    return np.concatenate(parts)


def zero_costate_guess(problem):
    """Straight line in ``q`` at constant speed with zero costates."""
    span = problem.tf - problem.t0
    vel = (problem.qf - problem.q0) / span
    zeros = np.zeros(2 * problem.dim)
    parts = [zeros]
    for k in range(1, problem.segments):
        q = problem.q0 + (k / problem.segments) * (problem.qf - problem.q0)
        parts.append(np.concatenate([q, vel, zeros]))
    return np.concatenate(parts)


def _newton(problem, x, opts, budget):
    """Damped Newton on the shooting residual. Returns (x, iters, norm, message)."""
    try:
        r = shooting_residual(problem, x)
    except BlowUpError as exc:
        return x, 0, float("inf"), f"blow-up during shooting: {exc}"
    norm = float(np.max(np.abs(r)))
    iters = 0
    while norm > opts.tolerance:
        if iters >= budget:
            return x, iters, norm, "max iterations exceeded"
        try:
            J, r = shooting_jacobian(problem, x, opts.fd_step, base=r)
        except BlowUpError as exc:
            return x, iters, norm, f"blow-up during shooting: {exc}"
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        iters += 1
        r_norm2 = float(np.linalg.norm(r))
        alpha = 1.0
        while True:
            trial = x + alpha * dx
            try:
                rt = shooting_residual(problem, trial)
                ok = np.linalg.norm(rt) < r_norm2
            except BlowUpError:
                ok = False
            if ok:
                break
            alpha *= 0.5
            if alpha < opts.min_step:
                return x, iters, norm, "line search failed"
        x, r = trial, rt
        norm = float(np.max(np.abs(r)))
        log.debug("newton iter %d: step %.3g, residual %.3e", iters, alpha, norm)
    return x, iters, norm, ""


def solve(problem, guess=None, opts=None):
    """Solve the two-point boundary-value problem by multiple shooting.

    External forces are switched on gradually through ``opts.continuation``;
    each stage warm-starts the next. Returns ``(trajectory, report)``; the
    trajectory is ``None`` when its final sampling blows up.
    """
    opts = SolverOptions() if opts is None else opts
    x = initial_guess(problem) if guess is None else np.asarray(guess, dtype=float).copy()
    if x.shape != (problem.n_unknowns,):
        raise ValueError(f"guess must have {problem.n_unknowns} entries")
    stages = opts.continuation if problem.model.has_forces else (1.0,)
    total = 0
    per_stage = []
    norm = float("inf")
    message = ""
    converged = False
    staged = problem
    for k, s in enumerate(stages):
        scale = s * problem.model.force_scale
        staged = problem.with_model(problem.model.scaled(scale))
        x, iters, norm, message = _newton(staged, x, opts, opts.max_iterations - total)
        total += iters
        per_stage.append(iters)
        log.info("continuation stage %d (force scale %.3g): %d iterations, residual %.3e",
                 k, scale, iters, norm)
        converged = not message
        if not converged:
            break
    report = SolveReport(
        converged=converged,
        iterations=total,
        final_residual_norm=norm,
        continuation_steps=len(per_stage),
        message=message or "converged",
        stage_iterations=per_stage,
    )
    try:
        # on failure this is the last stage attempted, not the full problem
        traj = sample_trajectory(staged, x)
    except BlowUpError as exc:
        report.converged = False
        report.message = f"blow-up during shooting: {exc}"
        return None, report
    report.hamiltonian_drift = traj.hamiltonian_drift()
    return traj, report


def sample_trajectory(problem, unknowns, refine=1):
    """Integrate every segment from ``unknowns`` and sample the whole horizon."""
    starts = segment_starts(problem, unknowns)
    model, mode = problem.model, problem.cost.mode
    n = problem.steps_per_segment * refine

    def rhs(t, x):
        return extremal_rhs(model, mode, x)

    _, seg = integrate(rhs, starts, 0.0, problem.segment_duration, n)
    # seg: (n + 1, segments, 4d); drop the duplicated junction samples
    pieces = [seg[:-1, s] for s in range(problem.segments)] + [seg[-1:, -1]]
    states = np.concatenate(pieces)
    total_steps = n * problem.segments
    t = problem.t0 + (problem.tf - problem.t0) * np.arange(total_steps + 1) / total_steps
    return trajectory_from_states(model, mode, t, states, unknowns)


def trajectory_from_states(model, mode, t, states, unknowns=None):
    u, rate = controls_from_packed(model, mode, states)
    ham = hamiltonian_from_packed(model, mode, states)
    qddot = extremal_rhs(model, mode, states)[:, model.dim:2 * model.dim]
    accum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    return SolvedTrajectory(t, states, u, rate, accum, ham, qddot, unknowns)
