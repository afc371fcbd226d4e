"""Coordinate-chart Riemannian geometry on batched numpy arrays.

Index layout used throughout the package:

* metric ``g[..., i, j]`` and its partials ``dg[..., k, i, j] = d_k g_ij``;
  second partials ``ddg[..., k, m, i, j] = d_k d_m g_ij``
* Christoffel symbols ``gamma[..., i, j, k] = Gamma^i_{jk}``
* curvature ``r[..., l, i, j, k] = R^l_{ijk}``, the ``l`` component of
  ``R(d_i, d_j) d_k``
* tau tensor ``tau[..., i, j, k] = tau_i^{jk}``

All operations accept any number of leading batch axes.
"""

import numpy as np

from riemspline._diff import (
    FIRST_STEP,
    SECOND_STEP,
    central_partials,
)

DEGENERACY_RATIO = 1e-10


class DegenerateMetricError(ValueError):
    """Raised when a metric is singular (or indefinite) at the requested point."""

    def __init__(self, eigenvalue, largest):
        self.eigenvalue = float(eigenvalue)
        self.largest = float(largest)
        super().__init__(
            f"degenerate metric: eigenvalue {self.eigenvalue:.6g} "
            f"(largest {self.largest:.6g})"
        )


def check_nondegenerate(g):
    """Raise :class:`DegenerateMetricError` unless every ``g`` in the batch is SPD."""
    g = np.asarray(g)
    eig = np.linalg.eigvalsh(g)
    lo = eig[..., 0]
    hi = eig[..., -1]
    bad = ~(lo > DEGENERACY_RATIO * np.abs(hi))
    if np.any(bad):
        idx = np.argmax(bad) if bad.ndim else None
        if idx is None:
            raise DegenerateMetricError(lo, hi)
        raise DegenerateMetricError(lo.ravel()[idx], hi.ravel()[idx])
    return g


class MetricField:
    """Position-dependent symmetric positive-definite matrix field.

    Parameters
    ----------
    func : callable
        Maps points ``(..., d)`` to matrices ``(..., d, d)``.
    dim : int
        Chart dimension ``d``.
    partials, second_partials : callable, optional
        Analytic derivatives with layouts ``(..., d, d, d)`` and
        ``(..., d, d, d, d)``. Missing ones are obtained by fourth-order
        central differences.
    """

    def __init__(self, func, dim, partials=None, second_partials=None):
        self.func = func
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        self._partials = partials
        self._second_partials = second_partials

    @classmethod
    def constant(cls, matrix):
        matrix = np.array(matrix, dtype=float)
        d = matrix.shape[0]

        def func(q):
            q = np.asarray(q)
            return np.broadcast_to(matrix, q.shape[:-1] + (d, d)).astype(q.dtype)

        def partials(q):
            q = np.asarray(q)
            return np.zeros(q.shape[:-1] + (d, d, d))

        def second_partials(q):
            q = np.asarray(q)
            return np.zeros(q.shape[:-1] + (d, d, d, d))

        return cls(func, d, partials, second_partials)

    @classmethod
    def identity(cls, dim):
        return cls.constant(np.eye(dim))

    def eval(self, q):
        return np.asarray(self.func(np.asarray(q, dtype=float)))

    __call__ = eval

    def partials(self, q):
        q = np.asarray(q, dtype=float)
        if self._partials is not None:
            return np.asarray(self._partials(q))
        return central_partials(self.func, q, FIRST_STEP)

    def second_partials(self, q):
        q = np.asarray(q, dtype=float)
        if self._second_partials is not None:
            return np.asarray(self._second_partials(q))
        return central_partials(self.partials, q, SECOND_STEP)

    def jet(self, q):
        """Return ``(g, dg, ddg)`` at ``q``."""
        return self.eval(q), self.partials(q), self.second_partials(q)

    def inverse(self):
        """The dual field ``g^{-1}`` with partials from the chain rule."""
        base = self

        def func(q):
            return np.linalg.inv(base.eval(q))

        def partials(q):
            ginv = np.linalg.inv(base.eval(q))
            return -np.einsum("...ia,...kab,...bj->...kij", ginv, base.partials(q), ginv)

        return MetricField(func, self.dim, partials)


class ScalarField:
    """Smooth scalar function on the chart (a potential energy, typically)."""

    def __init__(self, func, dim, grad=None, hess=None):
        self.func = func
        self.dim = int(dim)
        self._grad = grad
        self._hess = hess

    @classmethod
    def zero(cls, dim):
        return cls(
            lambda q: np.zeros(np.shape(q)[:-1]),
            dim,
            lambda q: np.zeros(np.shape(q)),
            lambda q: np.zeros(np.shape(q) + (np.shape(q)[-1],)),
        )

    def eval(self, q):
        return np.asarray(self.func(np.asarray(q, dtype=float)))

    __call__ = eval

    def grad_coords(self, q):
        q = np.asarray(q, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(q))
        return central_partials(self.func, q, FIRST_STEP)

    def hess_coords(self, q):
        q = np.asarray(q, dtype=float)
        if self._hess is not None:
            h = np.asarray(self._hess(q))
        else:
            h = central_partials(self.grad_coords, q, SECOND_STEP)
        return 0.5 * (h + np.swapaxes(h, -1, -2))


# ---------------------------------------------------------------------------
# array-level kernels


def christoffel_from_jet(g, dg, ginv=None):
    if ginv is None:
        ginv = np.linalg.inv(g)
    # first kind: G[l, j, k] = 1/2 (d_j g_lk + d_k g_jl - d_l g_jk)
    first = 0.5 * (
        np.einsum("...jlk->...ljk", dg)
        + np.einsum("...kjl->...ljk", dg)
        - dg
    )
    first = 0.5 * (first + np.swapaxes(first, -1, -2))
    return np.einsum("...il,...ljk->...ijk", ginv, first)


def christoffel_partials_from_jet(g, dg, ddg, ginv=None, gamma=None):
    """``dgamma[..., m, i, j, k] = d_m Gamma^i_{jk}``."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    if gamma is None:
        gamma = christoffel_from_jet(g, dg, ginv)
    # d_m G[l,j,k] = 1/2 (d_m d_j g_lk + d_m d_k g_jl - d_m d_l g_jk)
    dfirst = 0.5 * (
        np.einsum("...mjlk->...mljk", ddg)
        + np.einsum("...mkjl->...mljk", ddg)
        - ddg
    )
    dfirst = 0.5 * (dfirst + np.swapaxes(dfirst, -1, -2))
    # d_m g^{il} G_ljk = -g^{ia} d_m g_ab g^{bl} G_ljk = -g^{ia} d_m g_ab Gamma^b_jk
    return (
        np.einsum("...il,...mljk->...mijk", ginv, dfirst)
        - np.einsum("...ia,...mab,...bjk->...mijk", ginv, dg, gamma)
    )


def curvature_from_christoffel(gamma, dgamma):
    # R^l_{ijk} = d_i G^l_jk - d_j G^l_ik + G^n_jk G^l_in - G^n_ik G^l_jn
    return (
        np.einsum("...iljk->...lijk", dgamma)
        - np.einsum("...jlik->...lijk", dgamma)
        + np.einsum("...njk,...lin->...lijk", gamma, gamma)
        - np.einsum("...nik,...ljn->...lijk", gamma, gamma)
    )


def tau_from_jet(idual, didual, gamma):
    """``tau_i^{jk} = d_i I^{jk} + Gamma^j_{il} I^{lk} + Gamma^k_{il} I^{jl}``."""
    term = np.einsum("...jil,...lk->...ijk", gamma, idual)
    return didual + term + np.swapaxes(term, -1, -2)


# ---------------------------------------------------------------------------
# public operations


def christoffel(metric, q):
    """Levi-Civita connection coefficients ``Gamma^i_{jk}`` of ``metric`` at ``q``."""
    g = check_nondegenerate(metric.eval(q))
    return christoffel_from_jet(g, metric.partials(q))


def curvature(metric, q):
    """Riemann curvature ``R^l_{ijk}`` of ``metric`` at ``q``."""
    g, dg, ddg = metric.jet(q)
    check_nondegenerate(g)
    ginv = np.linalg.inv(g)
    gamma = christoffel_from_jet(g, dg, ginv)
    dgamma = christoffel_partials_from_jet(g, dg, ddg, ginv, gamma)
    return curvature_from_christoffel(gamma, dgamma)


def covariant_accel(metric, q, qdot, qddot):
    """Covariant acceleration ``qddot + Gamma(qdot, qdot)`` of a curve jet."""
    gamma = christoffel(metric, q)
    qdot = np.asarray(qdot, dtype=float)
    return np.asarray(qddot, dtype=float) + np.einsum("...ijk,...j,...k->...i", gamma, qdot, qdot)


def covariant_vector_derivative(metric, q, qdot, x, xdot):
    """Covariant derivative ``xdot^i + Gamma^i_{jk} qdot^j x^k`` of a vector along a curve."""
    gamma = christoffel(metric, q)
    return np.asarray(xdot, dtype=float) + np.einsum("...ijk,...j,...k->...i", gamma, qdot, x)


def covariant_coderiv(metric, q, qdot, f, fdot):
    """Covariant derivative of a covector along a curve, ``fdot_i - Gamma^k_{ij} f_k qdot^j``."""
    gamma = christoffel(metric, q)
    return np.asarray(fdot, dtype=float) - np.einsum("...kij,...k,...j->...i", gamma, f, qdot)


def raise_index(metric, q, f):
    g = check_nondegenerate(metric.eval(q))
    return np.linalg.solve(g, np.asarray(f, dtype=float)[..., None])[..., 0]


def lower_index(metric, q, a):
    g = check_nondegenerate(metric.eval(q))
    return np.einsum("...ij,...j->...i", g, np.asarray(a, dtype=float))


def riemannian_gradient(metric, potential, q):
    """``g^{-1} dV``; the acceleration a potential force induces is its negative."""
    return raise_index(metric, q, potential.grad_coords(q))


def riemannian_hessian(metric, potential, q):
    """``d_i d_j V - Gamma^k_{ij} d_k V``."""
    gamma = christoffel(metric, q)
    hess = potential.hess_coords(q) - np.einsum("...kij,...k->...ij", gamma, potential.grad_coords(q))
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def tau_tensor(induced_dual, metric, q):
    """Covariant derivative of the dual induced metric, ``tau_i^{jk}``."""
    gamma = christoffel(metric, q)
    return tau_from_jet(induced_dual.eval(q), induced_dual.partials(q), gamma)
