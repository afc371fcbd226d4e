"""Serial revolute chains described by standard Denavit-Hartenberg parameters.

All kinematic routines are batched over leading axes of ``q`` and are written
so that complex-valued joint angles propagate without conjugation; the model
layer relies on that to take complex-step derivatives.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KinematicChain:
    """Rigid-body data of a serial chain of revolute joints.

    ``dh`` rows are ``(a, alpha, d, theta_offset)``; joint ``k`` rotates
    about the z axis of frame ``k`` and link ``k`` is rigidly attached to
    frame ``k + 1``. Centers of mass and rotational inertias (about the
    center of mass) are expressed in the link's own frame.
    """

    dh: np.ndarray
    link_masses: np.ndarray
    link_coms: np.ndarray
    link_rot_inertias: np.ndarray
    gravity_accel: float = 9.81
    gravity_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    task_axes: tuple = (0, 1, 2)
    tool: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        dh = np.atleast_2d(np.asarray(self.dh, dtype=float))
        masses = np.asarray(self.link_masses, dtype=float).reshape(-1)
        coms = np.atleast_2d(np.asarray(self.link_coms, dtype=float))
        inertias = np.asarray(self.link_rot_inertias, dtype=float).reshape(-1, 3, 3)
        direction = np.asarray(self.gravity_direction, dtype=float).reshape(3)
        n = dh.shape[0]
        if dh.shape != (n, 4):
            raise ValueError(f"dh table must have shape (n, 4), got {dh.shape}")
        for name, arr, shape in (
            ("link_masses", masses, (n,)),
            ("link_coms", coms, (n, 3)),
            ("link_rot_inertias", inertias, (n, 3, 3)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape} for {n} joints")
        if np.any(masses <= 0):
            raise ValueError("link masses must be strictly positive")
        lengths = np.hypot(dh[:, 0], dh[:, 2])
        if np.any(lengths <= 0):
            raise ValueError("link lengths must be strictly positive")
        if not np.allclose(inertias, np.swapaxes(inertias, -1, -2)):
            raise ValueError("rotational inertias must be symmetric")
        if np.any(np.linalg.eigvalsh(inertias) < -1e-12):
            raise ValueError("rotational inertias must be positive semidefinite")
        if self.gravity_accel < 0:
            raise ValueError("gravity_accel must be non-negative")
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ValueError("gravity_direction must be non-zero")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "link_masses", masses)
        object.__setattr__(self, "link_coms", coms)
        object.__setattr__(self, "link_rot_inertias", inertias)
        # symmetric square roots, so the rotational energy is a plain Gram form
        w, v = np.linalg.eigh(inertias)
        roots = (v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(v, -1, -2)
        object.__setattr__(self, "_inertia_roots", roots)
        object.__setattr__(self, "gravity_direction", direction / norm)
        object.__setattr__(self, "task_axes", tuple(int(i) for i in self.task_axes))
        tool = np.asarray(self.tool, dtype=float)
        if tool.shape != (4, 4):
            raise ValueError("tool must be a 4x4 homogeneous transform")
        object.__setattr__(self, "tool", tool)

    @property
    def joint_count(self):
        return self.dh.shape[0]

    @property
    def link_lengths(self):
        return np.hypot(self.dh[:, 0], self.dh[:, 2])

    @property
    def gravity(self):
        return self.gravity_accel * self.gravity_direction

    @classmethod
    def planar(cls, lengths, masses, com_offsets, rot_inertias, gravity_accel=9.81):
        """Planar arm moving in the x-y plane with gravity along -y.

        ``com_offsets`` are distances from each joint axis to the link's
        center of mass; ``rot_inertias`` are about the out-of-plane axis.
        """
        lengths = np.asarray(lengths, dtype=float)
        n = lengths.size
        dh = np.zeros((n, 4))
        dh[:, 0] = lengths
        coms = np.zeros((n, 3))
        coms[:, 0] = np.asarray(com_offsets, dtype=float) - lengths
        inertias = np.zeros((n, 3, 3))
        rot = np.broadcast_to(np.asarray(rot_inertias, dtype=float), (n,))
        inertias[:, 1, 1] = rot
        inertias[:, 2, 2] = rot
        return cls(
            dh=dh,
            link_masses=np.broadcast_to(np.asarray(masses, dtype=float), (n,)),
            link_coms=coms,
            link_rot_inertias=inertias,
            gravity_accel=gravity_accel,
            gravity_direction=np.array([0.0, -1.0, 0.0]),
            task_axes=(0, 1),
        )


def _check_q(chain, q):
    q = np.asarray(q)
    if q.shape[-1:] != (chain.joint_count,):
        raise ValueError(
            f"configuration has {q.shape[-1:] or 'no'} entries, chain has {chain.joint_count} joints"
        )
    if not np.iscomplexobj(q):
        q = q.astype(float)
    return q


def joint_transforms(chain, q):
    """Per-joint homogeneous transforms ``(..., n, 4, 4)``."""
    q = _check_q(chain, q)
    a, alpha, d, offset = chain.dh.T
    theta = q + offset
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    T = np.zeros(q.shape + (4, 4), dtype=np.result_type(q, float))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st * ca
    T[..., 0, 2] = st * sa
    T[..., 0, 3] = a * ct
    T[..., 1, 0] = st
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -ct * sa
    T[..., 1, 3] = a * st
    T[..., 2, 1] = sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = d
    T[..., 3, 3] = 1.0
    return T


def forward_kinematics(chain, q):
    """Frames of the chain and its end position in task space.

    Returns
    -------
    frames : ndarray, shape (..., n + 1, 4, 4)
        Base frame followed by the frame after each joint.
    end : ndarray, shape (..., len(task_axes))
        Origin of the last frame restricted to the task axes.
    """
    T = joint_transforms(chain, q)
    n = chain.joint_count
    frames = np.empty(T.shape[:-3] + (n + 1, 4, 4), dtype=T.dtype)
    frames[..., 0, :, :] = np.eye(4)
    for k in range(n):
        frames[..., k + 1, :, :] = frames[..., k, :, :] @ T[..., k, :, :]
    return frames, _end_position(chain, frames)[..., list(chain.task_axes)]


def _end_position(chain, frames):
    last = frames[..., chain.joint_count, :, :]
    return last[..., :3, :3] @ chain.tool[:3, 3] + last[..., :3, 3]


def com_positions(chain, frames):
    """World positions ``(..., n, 3)`` of each link's center of mass."""
    R = frames[..., 1:, :3, :3]
    o = frames[..., 1:, :3, 3]
    return (R @ chain.link_coms[:, :, None])[..., 0] + o


def link_jacobians(chain, q, columns=None):
    """Linear and angular Jacobians of every link's center of mass.

    Returns ``(Jv, Jw)`` of shape ``(..., n, 3, m)`` where ``m`` is the number
    of selected joint ``columns`` (all joints by default). Column ``j`` of
    link ``k`` is zero when joint ``j`` is distal to link ``k``.
    """
    frames, _ = forward_kinematics(chain, q)
    return _jacobians(chain, frames, columns)


def _jacobians(chain, frames, columns=None):
    n = chain.joint_count
    if columns is None:
        columns = range(n)
    columns = list(columns)
    p = com_positions(chain, frames)
    z = np.take(frames[..., :3, 2], columns, axis=-2)
    o = np.take(frames[..., :3, 3], columns, axis=-2)
    # r[..., c, k] = p_k - o_j for joint j = columns[c]
    r = p[..., None, :, :] - o[..., :, None, :]
    zc = z[..., :, None, :]
    cross = np.stack([
        zc[..., 1] * r[..., 2] - zc[..., 2] * r[..., 1],
        zc[..., 2] * r[..., 0] - zc[..., 0] * r[..., 2],
        zc[..., 0] * r[..., 1] - zc[..., 1] * r[..., 0],
    ], axis=-1)
    # joint j only moves links k >= j
    mask = (np.arange(n)[None, :] >= np.asarray(columns)[:, None])[..., None]
    Jv = np.moveaxis(np.where(mask, cross, 0.0), -3, -1)
    Jw = np.moveaxis(np.where(mask, np.broadcast_to(zc, cross.shape), 0.0), -3, -1)
    return Jv, Jw


def end_jacobian(chain, q, columns=None):
    """Translational Jacobian of the end position in task space."""
    frames, _ = forward_kinematics(chain, q)
    return _end_jacobian(chain, frames, columns)


def _end_jacobian(chain, frames, columns=None):
    n = chain.joint_count
    if columns is None:
        columns = range(n)
    columns = list(columns)
    pe = _end_position(chain, frames)
    J = np.zeros(frames.shape[:-3] + (3, len(columns)), dtype=frames.dtype)
    for c, j in enumerate(columns):
        J[..., :, c] = np.cross(frames[..., j, :3, 2], pe - frames[..., j, :3, 3])
    return J[..., list(chain.task_axes), :]


def _mass_matrix(chain, frames, columns=None):
    Jv, Jw = _jacobians(chain, frames, columns)
    m = Jv.shape[-1]
    R = frames[..., 1:, :3, :3]
    # angular velocity in each link frame, weighted by the inertia root
    Aw = chain._inertia_roots @ (np.swapaxes(R, -1, -2) @ Jw)
    Av = np.sqrt(chain.link_masses)[:, None, None] * Jv
    A = np.concatenate([Av, Aw], axis=-3).reshape(Jv.shape[:-3] + (-1, m))
    g = np.swapaxes(A, -1, -2) @ A
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def _potential(chain, frames):
    p = com_positions(chain, frames)
    # V = -sum m_k <gravity, p_k>, zero at the base height
    return -((p @ chain.gravity) @ chain.link_masses)


def mass_matrix(chain, q):
    """Inertia metric ``sum_k J_k^T G_k J_k`` pulled back from the link bodies."""
    frames, _ = forward_kinematics(chain, q)
    return _mass_matrix(chain, frames)


def potential_energy(chain, q):
    """Gravitational potential ``sum_k m_k g height_k`` with the base at zero height."""
    frames, _ = forward_kinematics(chain, q)
    return _potential(chain, frames)


def joint_drag_tensor(coeffs):
    """Constant diagonal viscous joint-friction tensor."""
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
        raise ValueError(f"drag coefficients must be finite and non-negative, got {coeffs}")
    return np.diag(coeffs)


def endpoint_drag_tensor(chain, q, coeff):
    """Isotropic task-space drag ``coeff * J^T J`` pulled back to joint space."""
    if coeff < 0:
        raise ValueError("drag coefficient must be non-negative")
    J = end_jacobian(chain, q)
    return coeff * np.einsum("...ai,...aj->...ij", J, J)


def freeze_tail(chain, values):
    """Equivalent shorter chain with the last ``len(values)`` joints locked.

    The locked links become rigid parts of the last free link: masses,
    centers of mass and inertias are merged into one composite body, and the
    locked transforms move into ``tool`` so the end position is unchanged.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    n_lock = values.size
    n_free = chain.joint_count - n_lock
    if n_free < 1:
        raise ValueError("at least one joint must remain free")
    if n_lock == 0:
        return chain
    q_locked = np.concatenate([np.zeros(n_free), values])
    T = joint_transforms(chain, q_locked)
    # rel[k] maps link-k coordinates into frame n_free for every rigidly joined link
    rel = [np.eye(4)]
    for k in range(n_free, chain.joint_count):
        rel.append(rel[-1] @ T[k])
    bodies = range(n_free - 1, chain.joint_count)
    masses = chain.link_masses[list(bodies)]
    coms, inertias = [], []
    for b, k in enumerate(bodies):
        H = rel[b]
        coms.append(H[:3, :3] @ chain.link_coms[k] + H[:3, 3])
        inertias.append(H[:3, :3] @ chain.link_rot_inertias[k] @ H[:3, :3].T)
    coms = np.array(coms)
    total = masses.sum()
    center = masses @ coms / total
    inertia = np.zeros((3, 3))
    for m, c, I in zip(masses, coms, inertias):
        r = c - center
        inertia += I + m * (r @ r * np.eye(3) - np.outer(r, r))
    return KinematicChain(
        dh=chain.dh[:n_free],
        link_masses=np.concatenate([chain.link_masses[: n_free - 1], [total]]),
        link_coms=np.vstack([chain.link_coms[: n_free - 1], center]),
        link_rot_inertias=np.concatenate([chain.link_rot_inertias[: n_free - 1], inertia[None]]),
        gravity_accel=chain.gravity_accel,
        gravity_direction=chain.gravity_direction,
        task_axes=chain.task_axes,
        tool=rel[-1] @ chain.tool,
    )
