"""Optimal-control core: force field, cost models and the extremal ODE.

The extremal state stacks ``(q, qdot, lam, mu)`` into one vector of length
``4 d``; every function accepts leading batch axes.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from riemspline.geometry import (
    MetricField,
    check_nondegenerate,
    christoffel_from_jet,
    christoffel_partials_from_jet,
    curvature_from_christoffel,
    tau_from_jet,
)

COST_MODES = ("acceleration", "actuation")


@dataclass(frozen=True)
class ExtremalState:
    q: np.ndarray
    qdot: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        blocks = [np.asarray(b, dtype=float) for b in (self.q, self.qdot, self.lam, self.mu)]
        shapes = {b.shape for b in blocks}
        if len(shapes) != 1:
            raise ValueError(f"state blocks have mismatched shapes {sorted(shapes)}")
        for name, b in zip(("q", "qdot", "lam", "mu"), blocks):
            if not np.all(np.isfinite(b)):
                raise ValueError(f"non-finite entries in {name}")
            object.__setattr__(self, name, b)

    @property
    def dim(self):
        return self.q.shape[-1]

    def pack(self):
        return np.concatenate([self.q, self.qdot, self.lam, self.mu], axis=-1)

    @classmethod
    def unpack(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] % 4:
            raise ValueError("packed extremal state length must be a multiple of 4")
        return cls(*np.split(x, 4, axis=-1))


def split_state(x):
    d = x.shape[-1] // 4
    return x[..., :d], x[..., d:2 * d], x[..., 2 * d:3 * d], x[..., 3 * d:]


@dataclass(frozen=True)
class CostModel:
    """Quadratic control cost ``u^T I(q) u``.

    ``acceleration`` mode uses ``I = g``; ``actuation`` mode uses
    ``I = g M g`` with ``M`` the actuation cometric, i.e. the squared
    cometric norm of the actuator torque ``g u``.
    """

    mode: str
    metric: MetricField
    cometric: MetricField = None

    def __post_init__(self):
        if self.mode not in COST_MODES:
            raise ValueError(f"cost mode must be one of {COST_MODES}, got {self.mode!r}")
        if self.cometric is None:
            object.__setattr__(self, "cometric", MetricField.identity(self.metric.dim))

    @classmethod
    def for_model(cls, model, mode="acceleration"):
        return cls(mode, model.inertia, model.actuation_cometric)

    def induced(self, q):
        g = self.metric.eval(q)
        return induced_metric(self.mode, g, self.cometric.eval(q))

    def induced_dual(self):
        """``I^{-1}`` as a field, with partials from the chain rule."""
        cost = self

        def func(q):
            return np.linalg.inv(cost.induced(q))

        def partials(q):
            g, dg = cost.metric.eval(q), cost.metric.partials(q)
            return induced_dual_jet(cost.mode, g, dg, cost.cometric.eval(q), cost.cometric.partials(q))[1]

        return MetricField(func, self.metric.dim, partials)


def induced_metric(mode, g, cometric):
    if mode == "acceleration":
        return g
    return g @ cometric @ g


def induced_dual_jet(mode, g, dg, cometric, dcometric, ginv=None):
    """Return ``(I*, d I*)`` with ``dI*[..., k, i, j] = d_k I^{ij}``."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    if mode == "acceleration":
        idual = ginv
        didual = -np.einsum("...ia,...kab,...bj->...kij", ginv, dg, ginv)
        return idual, didual
    induced = g @ cometric @ g
    dinduced = (
        np.einsum("...kia,...ab,...bj->...kij", dg, cometric, g)
        + np.einsum("...ia,...kab,...bj->...kij", g, dcometric, g)
        + np.einsum("...ia,...ab,...kbj->...kij", g, cometric, dg)
    )
    idual = np.linalg.inv(induced)
    idual = 0.5 * (idual + np.swapaxes(idual, -1, -2))
    didual = -np.einsum("...ia,...kab,...bj->...kij", idual, dinduced, idual)
    return idual, didual


class ForceEval(NamedTuple):
    """External acceleration and its derivatives at ``(q, qdot)``.

    ``vel_jacobian[..., j, i] = d accel^j / d qdot^i`` and
    ``pos_cov_deriv[..., k, i] = (nabla_{d_i} accel)^k`` with ``qdot`` held fixed.
    """

    accel: np.ndarray
    vel_jacobian: np.ndarray
    pos_cov_deriv: np.ndarray


def _force_from_jet(jet, ginv, gamma, qdot):
    force = jet.dV + np.einsum("...ij,...j->...i", jet.D, qdot)
    accel = -np.einsum("...ij,...j->...i", ginv, force)
    vel_jac = -np.einsum("...ia,...aj->...ij", ginv, jet.D)
    # d_i accel^k = -g^{ka} (d_i g_ab accel^b + d_i d_a V + d_i D_ab qdot^b)
    dforce = (
        np.einsum("...iab,...b->...ia", jet.dg, accel)
        + jet.ddV
        + np.einsum("...iab,...b->...ia", jet.dD, qdot)
    )
    daccel = -np.einsum("...ka,...ia->...ki", ginv, dforce)
    cov = daccel + np.einsum("...kil,...l->...ki", gamma, accel)
    return ForceEval(accel, vel_jac, cov)


def external_acceleration(model, q, qdot):
    """Acceleration ``-g^{-1}(dV + D qdot)`` of gravity and drag, with derivatives."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    jet = model.jet(q)
    g = check_nondegenerate(jet.g)
    ginv = np.linalg.inv(g)
    gamma = christoffel_from_jet(g, jet.dg, ginv)
    return _force_from_jet(jet, ginv, gamma, qdot)


def control_from_costate(idual, lam):
    """Maximizing control ``u = 1/2 I^{-1} lam`` for a dual induced metric array."""
    return 0.5 * np.einsum("...ij,...j->...i", idual, lam)


def control(cost, q, lam):
    """:func:`control_from_costate` with ``I^{-1}`` taken from a :class:`CostModel`."""
    g = check_nondegenerate(cost.metric.eval(q))
    idual = np.linalg.inv(induced_metric(cost.mode, g, cost.cometric.eval(q)))
    return control_from_costate(idual, np.asarray(lam, dtype=float))


class _Terms(NamedTuple):
    gamma: np.ndarray
    force: ForceEval
    idual: np.ndarray
    u: np.ndarray


def _prepare(model, mode, q, qdot, lam, curvature=True):
    jet = model.jet(q)
    g = check_nondegenerate(jet.g)
    ginv = np.linalg.inv(g)
    gamma = christoffel_from_jet(g, jet.dg, ginv)
    force = _force_from_jet(jet, ginv, gamma, qdot)
    idual, didual = induced_dual_jet(mode, g, jet.dg, jet.cometric, jet.dcometric, ginv)
    u = control_from_costate(idual, lam)
    extra = {}
    if curvature:
        dgamma = christoffel_partials_from_jet(g, jet.dg, jet.ddg, ginv, gamma)
        extra["riemann"] = curvature_from_christoffel(gamma, dgamma)
        extra["tau"] = tau_from_jet(idual, didual, gamma)
    return _Terms(gamma, force, idual, u), extra


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite extremal state")


def extremal_rhs(model, mode, x, return_parts=False):
    """Time derivative of packed extremal states ``x[..., 4 d]``.

    Covariant derivatives along the curve are unrolled to plain time
    derivatives so the system can be handed to an explicit integrator.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    q, qdot, lam, mu = split_state(x)
    terms, extra = _prepare(model, mode, q, qdot, lam)
    gamma, (accel, vel_jac, cov) = terms.gamma, terms.force
    qddot = -np.einsum("...ijk,...j,...k->...i", gamma, qdot, qdot) + terms.u + accel
    lamdot = (
        np.einsum("...kij,...k,...j->...i", gamma, lam, qdot)
        - mu
        - np.einsum("...j,...ji->...i", lam, vel_jac)
    )
    external = (
        np.einsum("...k,...ki->...i", lam, cov)
        - np.einsum("...kij,...j,...lk,...l->...i", gamma, qdot, vel_jac, lam)
    )
    mudot = (
        np.einsum("...kij,...k,...j->...i", gamma, mu, qdot)
        - 0.25 * np.einsum("...ijk,...j,...k->...i", extra["tau"], lam, lam)
        + np.einsum("...lijk,...j,...k,...l->...i", extra["riemann"], qdot, qdot, lam)
        - external
    )
    out = np.concatenate([qdot, qddot, lamdot, mudot], axis=-1)
    if return_parts:
        return out, {"u": terms.u, "external": external, "tau": extra["tau"], "qddot": qddot}
    return out


def hamiltonian_rhs(model, cost, state):
    """Time derivative of an :class:`ExtremalState` (returned as the same type)."""
    x = state.pack() if isinstance(state, ExtremalState) else np.asarray(state, dtype=float)
    out = extremal_rhs(model, cost.mode, x)
    return ExtremalState.unpack(out) if isinstance(state, ExtremalState) else out


def hamiltonian_from_packed(model, mode, x):
    x = np.asarray(x, dtype=float)
    q, qdot, lam, mu = split_state(x)
    terms, _ = _prepare(model, mode, q, qdot, lam, curvature=False)
    return (
        0.25 * np.einsum("...i,...ij,...j->...", lam, terms.idual, lam)
        + np.einsum("...i,...i->...", lam, terms.force.accel)
        + np.einsum("...i,...i->...", mu, qdot)
    )


def hamiltonian_value(model, cost, state):
    """``H = 1/4 I^{ij} lam_i lam_j + lam_i accel^i + mu_i qdot^i``."""
    x = state.pack() if isinstance(state, ExtremalState) else state
    return hamiltonian_from_packed(model, cost.mode, x)


def controls_from_packed(model, mode, x):
    """Control ``u`` and its induced-metric cost rate along packed states."""
    x = np.asarray(x, dtype=float)
    q, _, lam, _ = split_state(x)
    jet = model.jet(q)
    g = check_nondegenerate(jet.g)
    induced = induced_metric(mode, g, jet.cometric)
    u = control_from_costate(np.linalg.inv(induced), lam)
    return u, np.einsum("...i,...ij,...j->...", u, induced, u)


def cost_rate(cost, q, u):
    """Instantaneous cost ``u^T I(q) u``."""
    u = np.asarray(u, dtype=float)
    return np.einsum("...i,...ij,...j->...", u, cost.induced(q), u)


def spline_residual(model, samples):
    """Residual of the Riemannian spline equation along uniformly sampled data.

    ``samples`` maps ``t``, ``q``, ``qdot`` and ``qddot`` to arrays with the
    sample index first. With ``a`` the covariant acceleration, the residual
    ``nabla^2 a + R(a, qdot) qdot`` is returned at samples ``2 .. N - 3``;
    the two covariant derivatives use central differences in time.
    """
    t = np.asarray(samples["t"], dtype=float)
    q = np.asarray(samples["q"], dtype=float)
    qdot = np.asarray(samples["qdot"], dtype=float)
    qddot = np.asarray(samples["qddot"], dtype=float)
    n = t.shape[0]
    if n < 5:
        raise ValueError(f"spline residual needs at least 5 samples, got {n}")
    dt = np.diff(t)
    h = dt[0]
    if h <= 0 or not np.allclose(dt, h, rtol=1e-9, atol=0.0):
        raise ValueError("spline residual needs uniformly spaced, increasing sample times")
    g, dg, ddg = model.inertia.jet(q)
    check_nondegenerate(g)
    ginv = np.linalg.inv(g)
    gamma = christoffel_from_jet(g, dg, ginv)
    riemann = curvature_from_christoffel(gamma, christoffel_partials_from_jet(g, dg, ddg, ginv, gamma))

    def along(vec, idx):
        return np.einsum("...ijk,...j,...k->...i", gamma[idx], qdot[idx], vec)

    a = qddot + np.einsum("...ijk,...j,...k->...i", gamma, qdot, qdot)
    mid = slice(1, n - 1)
    b = (a[2:] - a[:-2]) / (2 * h) + along(a[mid], mid)
    inner = slice(2, n - 2)
    c = (b[2:] - b[:-2]) / (2 * h) + along(b[1:-1], inner)
    curv = np.einsum("...iljk,...l,...j,...k->...i", riemann[inner], a[inner], qdot[inner], qdot[inner])
    return c + curv, c


def drag_cost_decomposition(model, q, qdot, qddot):
    """Split ``|u|_g^2`` for ``u = nabla_qdot qdot - accel`` into three parts.

    Returns ``(accel_term, drag_term, cross_term)``: the covariant
    acceleration norm, ``F^T g^{-1} F`` for the resistive force covector
    ``F_j = D_ij qdot^i`` (plus the potential gradient when gravity is on),
    and the coupling ``2 F_j (nabla_qdot qdot)^j``.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    jet = model.jet(q)
    g = check_nondegenerate(jet.g)
    gamma = christoffel_from_jet(g, jet.dg)
    acc = np.asarray(qddot, dtype=float) + np.einsum("...ijk,...j,...k->...i", gamma, qdot, qdot)
    force = np.einsum("...ij,...i->...j", jet.D, qdot) + jet.dV
    accel_term = np.einsum("...i,...ij,...j->...", acc, g, acc)
    drag_term = np.einsum("...i,...i->...", force, np.linalg.solve(g, force[..., None])[..., 0])
    cross_term = 2.0 * np.einsum("...j,...j->...", force, acc)
    return accel_term, drag_term, cross_term
