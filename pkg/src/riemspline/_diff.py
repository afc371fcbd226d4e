"""Finite-difference and complex-step differentiation of batched array functions.

Every function here takes ``f`` mapping an array of points ``(..., d)`` to an
array ``(..., *out)`` and returns derivatives laid out as ``(..., d, *out)``
with the differentiation index directly after the batch axes.
"""

import numpy as np

EPS = np.finfo(float).eps
FIRST_STEP = EPS ** (1.0 / 3.0)
# Used when differentiating a quantity that is itself a derivative.
SECOND_STEP = EPS ** (1.0 / 5.0)
COMPLEX_STEP = 1e-30

_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def central_partials(f, q, rel_step=FIRST_STEP):
    """Fourth-order central differences of ``f`` along each coordinate."""
    q = np.asarray(q, dtype=float)
    d = q.shape[-1]
    h = rel_step * np.maximum(1.0, np.abs(q))
    h = (q + h) - q  # exactly representable step
    eye = np.eye(d)
    # pts[..., k, s, :] = q + offset_s * h_k * e_k
    pts = (q[..., None, None, :]
           + _OFFSETS[:, None] * eye[:, None, :] * h[..., :, None, None])
    vals = np.asarray(f(pts))
    batch = q.ndim - 1
    out_shape = vals.shape[batch + 2:]
    diff = np.tensordot(vals, _WEIGHTS, axes=([batch + 1], [0]))
    scale = h.reshape(h.shape + (1,) * len(out_shape))
    return diff / scale


def central2_partials(f, q, rel_step=FIRST_STEP):
    """Second-order central differences; for differentiating exact derivatives."""
    q = np.asarray(q, dtype=float)
    d = q.shape[-1]
    h = rel_step * np.maximum(1.0, np.abs(q))
    h = (q + h) - q
    eye = np.eye(d)
    pts = q[..., None, None, :] + np.array([-1.0, 1.0])[:, None] * eye[:, None, :] * h[..., :, None, None]
    vals = np.asarray(f(pts))
    batch = q.ndim - 1
    diff = np.take(vals, 1, axis=batch + 1) - np.take(vals, 0, axis=batch + 1)
    scale = 2.0 * h.reshape(h.shape + (1,) * (diff.ndim - batch - 1))
    return diff / scale


def complex_step_partials(f, q, step=COMPLEX_STEP):
    """First partials of a real-analytic ``f`` by the complex-step method.

    ``f`` must be written with operations that propagate complex inputs
    without conjugation (no ``abs``, ``conj`` or ``vdot``).
    """
    q = np.asarray(q, dtype=float)
    d = q.shape[-1]
    pts = q[..., None, :] + 1j * step * np.eye(d)
    return np.asarray(f(pts)).imag / step
