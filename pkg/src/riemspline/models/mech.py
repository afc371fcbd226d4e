"""Mechanical systems as geometric data: inertia metric, potential, drag, cometric."""

import dataclasses
from dataclasses import dataclass
from importlib import resources
from typing import Callable, NamedTuple, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from riemspline._diff import COMPLEX_STEP, FIRST_STEP, central_partials, complex_step_partials
from riemspline.geometry import MetricField, ScalarField
from riemspline.models import chain as kin
from riemspline.models.chain import KinematicChain

DRAG_MODES = ("none", "joint", "endpoint")


class ModelJet(NamedTuple):
    """Everything the extremal ODE needs from a model at a batch of points.

    Force-related entries (``dV``, ``ddV``, ``D``, ``dD``) already carry the
    model's ``force_scale``.
    """

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    dV: np.ndarray
    ddV: np.ndarray
    D: np.ndarray
    dD: np.ndarray
    cometric: np.ndarray
    dcometric: np.ndarray


class DragField:
    """Symmetric positive-semidefinite drag tensor field ``D(q)`` with partials."""

    def __init__(self, func, dim, partials=None):
        self.func = func
        self.dim = dim
        self._partials = partials

    @classmethod
    def constant(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        d = matrix.shape[0]
        return cls(
            lambda q: np.broadcast_to(matrix, np.shape(q)[:-1] + (d, d)).copy(),
            d,
            lambda q: np.zeros(np.shape(q)[:-1] + (d, d, d)),
        )

    @classmethod
    def zero(cls, dim):
        return cls.constant(np.zeros((dim, dim)))

    def __call__(self, q):
        return np.asarray(self.func(np.asarray(q, dtype=float)))

    def partials(self, q):
        q = np.asarray(q, dtype=float)
        if self._partials is not None:
            return np.asarray(self._partials(q))
        return central_partials(self.func, q)


@dataclass(frozen=True)
class MechModel:
    """A mechanical system on a ``dim``-dimensional configuration chart.

    The ``inertia``, ``potential`` and ``drag`` fields are stored unscaled;
    ``force_scale`` multiplies every external force when the model is used
    through :meth:`jet` (the continuation parameter of the solver).
    """

    dim: int
    inertia: MetricField
    potential: ScalarField
    drag: DragField
    actuation_cometric: MetricField
    chain: Optional[KinematicChain] = None
    fixed_joints: tuple = ()
    gravity: bool = True
    drag_mode: str = "none"
    force_scale: float = 1.0
    name: str = "custom"
    jet_func: Optional[Callable] = None

    def __repr__(self):
        return (f"MechModel(name={self.name!r}, dim={self.dim}, gravity={self.gravity}, "
                f"drag_mode={self.drag_mode!r}, force_scale={self.force_scale:g})")

    def scaled(self, force_scale):
        return dataclasses.replace(self, force_scale=float(force_scale))

    @property
    def has_forces(self):
        return self.force_scale != 0 and (self.gravity or self.drag_mode != "none")

    def full_configuration(self, q):
        """Append the frozen joint values to ``q`` (identity when nothing is frozen)."""
        q = np.asarray(q, dtype=float)
        if not self.fixed_joints:
            return q
        tail = np.broadcast_to(np.asarray(self.fixed_joints, dtype=float), q.shape[:-1] + (len(self.fixed_joints),))
        return np.concatenate([q, tail], axis=-1)

    def task_position(self, q):
        if self.chain is None:
            return np.asarray(q, dtype=float)
        return kin.forward_kinematics(self.chain, self.full_configuration(q))[1]

    def jet(self, q):
        q = np.asarray(q, dtype=float)
        if self.jet_func is not None:
            g, dg, ddg, dV, ddV, D, dD = self.jet_func(q)
        else:
            g, dg, ddg = self.inertia.jet(q)
            dV = self.potential.grad_coords(q)
            ddV = self.potential.hess_coords(q)
            D = self.drag(q)
            dD = self.drag.partials(q)
        s = self.force_scale
        return ModelJet(
            g, dg, ddg, s * dV, s * ddV, s * D, s * dD,
            self.actuation_cometric.eval(q), self.actuation_cometric.partials(q),
        )


class _ChainSystem:
    """Packs inertia, potential and endpoint-drag Gram matrix into one array.

    A single forward pass over the chain yields all three. First partials
    come from the complex step (exact to rounding), second partials from
    central differences of those.
    """

    def __init__(self, chain, gravity, endpoint):
        self.chain = chain
        self.dim = chain.joint_count
        self.gravity = gravity
        self.endpoint = endpoint

    def pack(self, q):
        d = self.dim
        frames, _ = kin.forward_kinematics(self.chain, q)
        parts = [kin._mass_matrix(self.chain, frames).reshape(q.shape[:-1] + (d * d,))]
        if self.gravity:
            parts.append(kin._potential(self.chain, frames)[..., None])
        else:
            parts.append(np.zeros(q.shape[:-1] + (1,), dtype=frames.dtype))
        if self.endpoint:
            J = kin._end_jacobian(self.chain, frames)
            parts.append(np.einsum("...ai,...aj->...ij", J, J).reshape(q.shape[:-1] + (d * d,)))
        return np.concatenate(parts, axis=-1)

    def dpack(self, q):
        return complex_step_partials(self.pack, q)

    def ddpack(self, q):
        return self.fused(q)[2]

    def split(self, arr):
        d = self.dim
        g = arr[..., : d * d].reshape(arr.shape[:-1] + (d, d))
        V = arr[..., d * d]
        G = arr[..., d * d + 1:].reshape(arr.shape[:-1] + (d, d)) if self.endpoint else None
        return g, V, G

    def metric(self, q):
        return self.split(self.pack(q))[0]

    def metric_partials(self, q):
        return self.split(self.dpack(q))[0]

    def metric_second_partials(self, q):
        return self.split(self.ddpack(q))[0]

    def potential(self, q):
        return self.split(self.pack(q))[1]

    def potential_grad(self, q):
        return self.split(self.dpack(q))[1]

    def potential_hess(self, q):
        return self.split(self.ddpack(q))[1]

    def gram(self, q):
        return self.split(self.pack(q))[2]

    def gram_partials(self, q):
        return self.split(self.dpack(q))[2]

    def fused(self, q):
        """Value, first and second partials of :meth:`pack` from one chain pass.

        Evaluates at ``q + i eps e_m`` and ``q +/- h e_k + i eps e_m`` for
        ``k <= m``; the mixed second partials are filled in by symmetry.
        """
        q = np.asarray(q, dtype=float)
        d = self.dim
        batch = q.shape[:-1]
        h = FIRST_STEP * np.maximum(1.0, np.abs(q))
        h = (q + h) - q
        rows, cols = self._pairs
        npair = rows.size
        eye = np.eye(d)
        base = q[..., None, :] + 1j * COMPLEX_STEP * eye
        # shifted[..., s, p, :] = q + sign_s h_k e_k + i eps e_m for pair p = (k, m)
        shift = h[..., rows, None] * eye[rows]
        sign = np.array([-1.0, 1.0])[:, None, None]
        shifted = base[..., None, cols, :] + sign * shift[..., None, :, :]
        pts = np.concatenate([base, shifted.reshape(batch + (2 * npair, d))], axis=-2)
        vals = self.pack(pts)
        val = vals[..., 0, :].real
        d1 = vals[..., :d, :].imag / COMPLEX_STEP
        sh = vals[..., d:, :].imag.reshape(batch + (2, npair, vals.shape[-1]))
        mixed = (sh[..., 1, :, :] - sh[..., 0, :, :]) / (2.0 * COMPLEX_STEP * h[..., rows, None])
        d2 = np.empty(batch + (d, d, vals.shape[-1]))
        d2[..., rows, cols, :] = mixed
        d2[..., cols, rows, :] = mixed
        return val, d1, d2

    @property
    def _pairs(self):
        return np.triu_indices(self.dim)

    def jet(self, q, drag_coeff, joint_drag):
        val, d1, d2 = self.fused(q)
        g, _, G = self.split(val)
        dg, dV, dG = self.split(d1)
        ddg, ddV, _ = self.split(d2)
        if self.endpoint:
            D, dD = drag_coeff * G, drag_coeff * dG
        else:
            D = np.broadcast_to(joint_drag, g.shape).copy()
            dD = np.zeros(dg.shape)
        return g, dg, ddg, dV, ddV, D, dD


def chain_model(chain, gravity=True, drag="none", drag_coeffs=None, drag_coeff=1.0,
                fixed_joints=(), cometric=None, name="custom_chain"):
    """Build a :class:`MechModel` from a kinematic chain.

    The first ``joint_count - len(fixed_joints)`` joints are the coordinates;
    the remaining joints are frozen at ``fixed_joints``. Joint drag uses
    ``drag_coeffs`` per joint, falling back to the scalar ``drag_coeff``;
    endpoint drag uses ``drag_coeff``.
    """
    if drag not in DRAG_MODES:
        raise ValueError(f"drag must be one of {DRAG_MODES}, got {drag!r}")
    fixed = tuple(float(v) for v in fixed_joints)
    dim = chain.joint_count - len(fixed)
    if dim < 1:
        raise ValueError("at least one joint must remain free")
    if not np.all(np.isfinite(fixed)):
        raise ValueError("fixed joint values must be finite")
    system = _ChainSystem(kin.freeze_tail(chain, fixed), gravity, drag == "endpoint")

    if drag == "joint":
        # a scalar coefficient applies to every joint unless per-joint values are given
        coeffs = drag_coeff if drag_coeffs is None else drag_coeffs
        coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), (dim,))
        joint_drag = kin.joint_drag_tensor(coeffs)
    else:
        joint_drag = np.zeros((dim, dim))
    if drag == "endpoint" and drag_coeff < 0:
        raise ValueError("drag coefficient must be non-negative")

    inertia = MetricField(system.metric, dim, system.metric_partials, system.metric_second_partials)
    if gravity:
        potential = ScalarField(system.potential, dim, system.potential_grad, system.potential_hess)
    else:
        potential = ScalarField.zero(dim)
    if drag == "endpoint":
        drag_field = DragField(
            lambda q: drag_coeff * system.gram(q), dim,
            lambda q: drag_coeff * system.gram_partials(q),
        )
    else:
        drag_field = DragField.constant(joint_drag)
    if cometric is None:
        cometric = MetricField.identity(dim)

    return MechModel(
        dim=dim,
        inertia=inertia,
        potential=potential,
        drag=drag_field,
        actuation_cometric=cometric,
        chain=chain,
        fixed_joints=fixed,
        gravity=bool(gravity),
        drag_mode=drag,
        name=name,
        jet_func=lambda q: system.jet(q, drag_coeff, joint_drag),
    )


@dataclass(frozen=True)
class TwoLinkParams:
    """Identical uniform links; the rotational inertia defaults to a slender rod."""

    mass: float = 1.0
    length: float = 1.0
    com_offset: Optional[float] = None
    rot_inertia: Optional[float] = None
    gravity_accel: float = 9.81

    def chain(self):
        if self.mass <= 0 or self.length <= 0:
            raise ValueError("mass and length must be strictly positive")
        com = 0.5 * self.length if self.com_offset is None else self.com_offset
        rot = self.mass * self.length ** 2 / 12.0 if self.rot_inertia is None else self.rot_inertia
        if rot < 0:
            raise ValueError("rotational inertia must be non-negative")
        return KinematicChain.planar(
            [self.length] * 2, [self.mass] * 2, [com] * 2, [rot] * 2, self.gravity_accel
        )


def two_link_model(params=None, gravity=True, drag="none", drag_coeffs=None, drag_coeff=1.0):
    """Planar two-link arm in a vertical plane; the actuation cometric is the identity."""
    params = TwoLinkParams() if params is None else params
    return chain_model(
        params.chain(), gravity=gravity, drag=drag, drag_coeffs=drag_coeffs,
        drag_coeff=drag_coeff, name="two_link",
    )


UR5_REQUIRED_KEYS = ("a", "alpha", "d", "theta_offset", "mass", "com", "inertia")


def load_ur5_chain(path=None):
    """Read the UR5 parameter file (the packaged one by default)."""
    if path is None:
        text = resources.files("riemspline.models").joinpath("data/ur5.toml").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    data = tomllib.loads(text)
    links = data.get("link")
    if not links:
        raise ValueError("UR5 parameter file has no [[link]] records")
    if "gravity_accel" not in data:
        raise ValueError("UR5 parameter file is missing 'gravity_accel'")
    dh, masses, coms, inertias = [], [], [], []
    for i, rec in enumerate(links):
        missing = [k for k in UR5_REQUIRED_KEYS if k not in rec]
        if missing:
            raise ValueError(f"UR5 link {i + 1} is missing {', '.join(missing)}")
        dh.append([rec["a"], rec["alpha"], rec["d"], rec["theta_offset"]])
        masses.append(rec["mass"])
        coms.append(rec["com"])
        inertias.append(np.diag(rec["inertia"]))
    return KinematicChain(
        dh=np.array(dh),
        link_masses=np.array(masses),
        link_coms=np.array(coms),
        link_rot_inertias=np.array(inertias),
        gravity_accel=float(data["gravity_accel"]),
        gravity_direction=np.array([0.0, 0.0, -1.0]),
        task_axes=(0, 1, 2),
    )


def ur5_model(fixed_wrist=(0.1, 0.1, 0.1), gravity=True, friction=1.0, chain=None, drag="joint"):
    """UR5 driven through its first three joints with the wrist frozen.

    ``friction`` is the viscous joint coefficient (scalar or per joint).
    """
    chain = load_ur5_chain() if chain is None else chain
    fixed_wrist = tuple(float(v) for v in fixed_wrist)
    if len(fixed_wrist) != chain.joint_count - 3:
        raise ValueError(f"expected {chain.joint_count - 3} wrist values, got {len(fixed_wrist)}")
    if drag == "endpoint":
        return chain_model(chain, gravity=gravity, drag="endpoint", drag_coeff=float(np.max(friction)),
                           fixed_joints=fixed_wrist, name="ur5")
    return chain_model(chain, gravity=gravity, drag=drag, drag_coeffs=friction,
                       fixed_joints=fixed_wrist, name="ur5")


def euclidean_model(dim):
    """Force-free system whose inertia metric is the identity (flat space)."""
    return MechModel(
        dim=dim,
        inertia=MetricField.identity(dim),
        potential=ScalarField.zero(dim),
        drag=DragField.zero(dim),
        actuation_cometric=MetricField.identity(dim),
        gravity=False,
        drag_mode="none",
        name="euclidean",
    )
