"""scikit-learn style wrapper around the shooting solver."""

import warnings

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from riemspline.bvp import DEFAULT_CONTINUATION, BvpProblem, SolverOptions, solve
from riemspline.control import CostModel
from riemspline.models import two_link_model


class TrajectoryOptimizer(BaseEstimator):
    """Optimal point-to-point trajectory for a mechanical model.

    ``fit`` takes the boundary conditions as rows: either ``[q0, qf]`` (rest
    to rest) or ``[q0, v0, qf, vf]``. After fitting, ``predict`` evaluates
    the configuration at arbitrary times by Hermite interpolation of the
    dense solver samples.

    Parameters
    ----------
    model : MechModel, optional
        System to optimize over; defaults to the two-link arm with gravity.
    cost_mode : {"actuation", "acceleration"}
        Which norm of the control input is integrated.
    t0, tf : float
        Time horizon.
    segments, steps : int
        Shooting segments and RK4 steps per segment.
    tol : float
        Newton tolerance on the shooting residual.
    max_iter : int
        Newton iteration budget shared by all continuation stages.
    continuation : sequence of float, optional
        Force-scale stages; ignored for force-free models.

    Attributes
    ----------
    trajectory_ : SolvedTrajectory
    report_ : SolveReport
    total_cost_ : float
    n_iter_ : int
    n_features_in_ : int
        Configuration dimension.
    """

    def __init__(self, model=None, cost_mode="actuation", t0=0.0, tf=1.0, segments=5, steps=40,
                 tol=1e-8, max_iter=50, continuation=None):
        self.model = model
        self.cost_mode = cost_mode
        self.t0 = t0
        self.tf = tf
        self.segments = segments
        self.steps = steps
        self.tol = tol
        self.max_iter = max_iter
        self.continuation = continuation

    def _boundary(self, X, dim):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != dim:
            raise ValueError(f"X has {X.shape[1]} columns but the model has dimension {dim}")
        if X.shape[0] == 2:
            zeros = np.zeros(dim)
            return X[0], zeros, X[1], zeros
        if X.shape[0] == 4:
            return X[0], X[1], X[2], X[3]
        raise ValueError(f"X must have 2 rows [q0, qf] or 4 rows [q0, v0, qf, vf], got {X.shape[0]}")

    def fit(self, X, y=None):
        model = two_link_model() if self.model is None else self.model
        q0, v0, qf, vf = self._boundary(X, model.dim)
        cost = CostModel.for_model(model, self.cost_mode)
        problem = BvpProblem(model, cost, q0, qf, v0, vf, self.t0, self.tf,
                             self.segments, self.steps)
        stages = DEFAULT_CONTINUATION if self.continuation is None else tuple(self.continuation)
        opts = SolverOptions(tolerance=self.tol, max_iterations=self.max_iter, continuation=stages)
        traj, report = solve(problem, opts=opts)
        if traj is None:
            raise RuntimeError(report.message)
        if not report.converged:
            warnings.warn(f"shooting did not converge: {report.message}", ConvergenceWarning)
        self.trajectory_ = traj
        self.report_ = report
        self.total_cost_ = traj.total_cost
        self.n_iter_ = report.iterations
        self.n_features_in_ = model.dim
        self._spline = CubicHermiteSpline(traj.t, traj.q, traj.qdot, axis=0)
        return self

    def _times(self, t):
        check_is_fitted(self, "trajectory_")
        t = np.asarray(t, dtype=np.float64)
        lo, hi = self.trajectory_.t[0], self.trajectory_.t[-1]
        if np.any(t < lo) or np.any(t > hi):
            raise ValueError(f"times must lie in [{lo}, {hi}]")
        return t

    def predict(self, t):
        """Configuration at times ``t`` (inside the fitted horizon)."""
        t = self._times(t)
        return self._spline(t)

    def predict_velocity(self, t):
        t = self._times(t)
        return self._spline.derivative()(t)
