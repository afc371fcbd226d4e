"""Built-in invariant suite run by ``riemspline check``.

Each check samples random data from a fixed seed, so repeated runs print
identical numbers.
"""

from typing import NamedTuple

import numpy as np

from riemspline.bvp import BvpProblem, solve, zero_costate_guess
from riemspline.control import (
    CostModel,
    drag_cost_decomposition,
    external_acceleration,
    extremal_rhs,
)
from riemspline.geometry import (
    MetricField,
    covariant_accel,
    covariant_coderiv,
    covariant_vector_derivative,
    curvature,
    lower_index,
    raise_index,
    riemannian_hessian,
)
from riemspline.models import euclidean_model, two_link_model

SEED = 20240601


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def random_metric_field(rng, dim, modes=3, strength=0.3, analytic=False):
    """Smooth SPD field ``S0 + sum_m S_m sin(w_m . q + phi_m)``.

    ``S0`` dominates the oscillating terms, so the field is positive
    definite everywhere. Without ``analytic`` the partials come from the
    finite-difference backend.
    """
    A = rng.normal(size=(dim, dim))
    base = A @ A.T + dim * np.eye(dim)
    lo = np.linalg.eigvalsh(base)[0]
    amps = []
    for _ in range(modes):
        S = rng.normal(size=(dim, dim))
        S = 0.5 * (S + S.T)
        amps.append(S * (strength * lo / (modes * np.linalg.norm(S, 2))))
    amps = np.array(amps)
    freqs = rng.normal(size=(modes, dim))
    phases = rng.uniform(0, 2 * np.pi, size=modes)

    def func(q):
        q = np.asarray(q)
        arg = q @ freqs.T + phases
        return base + np.einsum("...m,mij->...ij", np.sin(arg), amps)

    def partials(q):
        q = np.asarray(q)
        arg = q @ freqs.T + phases
        return np.einsum("...m,mk,mij->...kij", np.cos(arg), freqs, amps)

    def second_partials(q):
        q = np.asarray(q)
        arg = q @ freqs.T + phases
        return -np.einsum("...m,mk,ml,mij->...klij", np.sin(arg), freqs, freqs, amps)

    if analytic:
        return MetricField(func, dim, partials, second_partials)
    return MetricField(func, dim)


def check_curvature_symmetries(samples=100, tol=1e-5):
    rng = np.random.default_rng(SEED)
    worst_anti = worst_bianchi = 0.0
    for _ in range(samples):
        dim = int(rng.integers(2, 5))
        metric = random_metric_field(rng, dim)
        q = rng.normal(size=dim)
        r = curvature(metric, q)
        scale = max(1.0, np.max(np.abs(r)))
        worst_anti = max(worst_anti, np.max(np.abs(r + np.swapaxes(r, 1, 2))) / scale)
        cyc = r + np.einsum("ljki->lijk", r) + np.einsum("lkij->lijk", r)
        worst_bianchi = max(worst_bianchi, np.max(np.abs(cyc)) / scale)
    ok = bool(worst_anti < tol and worst_bianchi < tol)
    return CheckResult("curvature antisymmetry and Bianchi", ok,
                       f"max {worst_anti:.2e} / {worst_bianchi:.2e} (tol {tol:g})")


def _curve(rng, dim):
    c = rng.normal(size=(3, dim))
    return lambda t: c[0] + c[1] * t + c[2] * t * t, lambda t: c[1] + 2 * c[2] * t


def check_product_rules(samples=100, tol=1e-6, step=1e-5):
    rng = np.random.default_rng(SEED + 1)
    worst_metric = worst_dual = 0.0
    for _ in range(samples):
        dim = int(rng.integers(2, 5))
        metric = random_metric_field(rng, dim)
        q, qd = _curve(rng, dim)
        X, Xd = _curve(rng, dim)
        Y, Yd = _curve(rng, dim)
        f, fd = _curve(rng, dim)
        t = rng.uniform(-0.5, 0.5)

        def gxy(s):
            return X(s) @ metric(q(s)) @ Y(s)

        def pair(s):
            return f(s) @ X(s)

        lhs = (gxy(t + step) - gxy(t - step)) / (2 * step)
        nx = covariant_vector_derivative(metric, q(t), qd(t), X(t), Xd(t))
        ny = covariant_vector_derivative(metric, q(t), qd(t), Y(t), Yd(t))
        g = metric(q(t))
        rhs = nx @ g @ Y(t) + X(t) @ g @ ny
        worst_metric = max(worst_metric, abs(lhs - rhs) / max(1.0, abs(lhs)))

        lhs = (pair(t + step) - pair(t - step)) / (2 * step)
        nf = covariant_coderiv(metric, q(t), qd(t), f(t), fd(t))
        rhs = nf @ X(t) + f(t) @ nx
        worst_dual = max(worst_dual, abs(lhs - rhs) / max(1.0, abs(lhs)))
    ok = bool(worst_metric < tol and worst_dual < tol)
    return CheckResult("metric compatibility and duality pairing", ok,
                       f"max {worst_metric:.2e} / {worst_dual:.2e} (tol {tol:g})")


def check_musical_roundtrip(samples=100, tol=1e-12):
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    for _ in range(samples):
        dim = int(rng.integers(2, 6))
        metric = random_metric_field(rng, dim)
        q = rng.normal(size=dim)
        a = rng.normal(size=dim)
        f = rng.normal(size=dim)
        e1 = np.max(np.abs(raise_index(metric, q, lower_index(metric, q, a)) - a)) / np.max(np.abs(a))
        e2 = np.max(np.abs(lower_index(metric, q, raise_index(metric, q, f)) - f)) / np.max(np.abs(f))
        worst = max(worst, e1, e2)
    return CheckResult("musical isomorphism round trip", bool(worst < tol), f"max {worst:.2e} (tol {tol:g})")


def potential_hessian_gap(model, rng, samples):
    """Max gap between the external costate term and ``-2 u^j Hess_ij``.

    The external term is the one the extremal right-hand side subtracts in
    the ``mu`` equation; for a pure potential it must equal the contraction.
    """
    d = model.dim
    x = np.concatenate([
        rng.uniform(-np.pi, np.pi, size=(samples, d)),
        rng.normal(size=(samples, 3 * d)),
    ], axis=-1)
    _, parts = extremal_rhs(model, "acceleration", x, return_parts=True)
    hess = riemannian_hessian(model.inertia, model.potential, x[:, :d])
    rhs = -2.0 * np.einsum("...j,...ij->...i", parts["u"], hess)
    scale = np.maximum(1.0, np.abs(rhs))
    return float(np.max(np.abs(parts["external"] - rhs) / scale))


def check_potential_hessian(samples=100, tol=1e-6):
    model = two_link_model(gravity=True, drag="none")
    gap = potential_hessian_gap(model, np.random.default_rng(SEED + 3), samples)
    return CheckResult("potential-Hessian identity", gap < tol, f"max {gap:.2e} (tol {tol:g})")


def check_drag_decomposition(samples=1000, tol=1e-12):
    rng = np.random.default_rng(SEED + 4)
    model = two_link_model(gravity=False, drag="joint", drag_coeffs=[0.7, 1.3])
    q = rng.uniform(-np.pi, np.pi, size=(samples, 2))
    qdot = rng.normal(size=(samples, 2))
    qddot = rng.normal(size=(samples, 2))
    parts = drag_cost_decomposition(model, q, qdot, qddot)
    total = sum(parts)
    cost = CostModel.for_model(model, "acceleration")
    u = covariant_accel(model.inertia, q, qdot, qddot) - external_acceleration(model, q, qdot).accel
    direct = np.einsum("...i,...ij,...j->...", u, cost.induced(q), u)
    err = float(np.max(np.abs(total - direct) / np.maximum(np.abs(direct), 1e-300)))
    return CheckResult("drag cost decomposition", err < tol, f"max rel {err:.2e} (tol {tol:g})")


def check_tau_vanishes(samples=100, tol=1e-10):
    rng = np.random.default_rng(SEED + 5)
    model = two_link_model(gravity=True, drag="joint")
    x = rng.normal(size=(samples, 8))
    _, parts = extremal_rhs(model, "acceleration", x, return_parts=True)
    worst = float(np.max(np.abs(parts["tau"])))
    return CheckResult("tau vanishes for the acceleration cost", worst < tol,
                       f"max {worst:.2e} (tol {tol:g})")


def check_flat_bvp(tol=1e-8):
    model = euclidean_model(2)
    problem = BvpProblem(model, CostModel.for_model(model), [0.0, 0.0], [1.0, 1.0],
                         segments=5, steps_per_segment=20)
    traj, report = solve(problem, guess=zero_costate_guess(problem))
    s = traj.t[:, None]
    err = float(np.max(np.abs(traj.q - (3 * s ** 2 - 2 * s ** 3))))
    ok = report.converged and report.iterations <= 2 and err < tol
    return CheckResult("flat-space cubic Hermite", ok,
                       f"{report.iterations} iterations, max error {err:.2e} (tol {tol:g})")


CHECKS = (
    check_curvature_symmetries,
    check_product_rules,
    check_musical_roundtrip,
    check_potential_hessian,
    check_drag_decomposition,
    check_tau_vanishes,
    check_flat_bvp,
)


def run_checks():
    return [check() for check in CHECKS]
