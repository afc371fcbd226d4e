import numpy as np
import pytest
from scipy.integrate import trapezoid
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning, NotFittedError

from riemspline import TrajectoryOptimizer
from riemspline.models import euclidean_model, two_link_model


def test_flat_fit_predict_is_hermite_cubic():
    est = TrajectoryOptimizer(model=euclidean_model(2), cost_mode="acceleration", segments=2, steps=10)
    X = [[0.0, 1.0], [1.0, 0.0], [2.0, -1.0], [0.0, 0.0]]
    est.fit(X)
    assert est.report_.converged and est.n_features_in_ == 2
    t = np.linspace(0, 1, 7)
    s = t[:, None]
    h00, h10, h01, h11 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2
    expect = h00 * [0.0, 1.0] + h10 * [1.0, 0.0] + h01 * [2.0, -1.0] + h11 * [0.0, 0.0]
    np.testing.assert_allclose(est.predict(t), expect, atol=1e-12)
    np.testing.assert_allclose(est.predict_velocity([0.0, 1.0]), [[1.0, 0.0], [0.0, 0.0]], atol=1e-12)
    # |qddot|^2 of this cubic; the running cost is accumulated by the trapezoid rule
    c2, c3 = np.array([4.0, -6.0]), np.array([-3.0, 4.0])
    exact = sum(4 * c2[i]**2 + 12 * c2[i] * c3[i] + 12 * c3[i]**2 for i in range(2))
    s = est.trajectory_.t
    rate = np.sum((2 * c2 + 6 * c3 * s[:, None]) ** 2, axis=1)
    assert est.total_cost_ == pytest.approx(trapezoid(rate, s), rel=1e-12)
    fine = clone(est).set_params(steps=200).fit(X)
    assert fine.total_cost_ == pytest.approx(exact, rel=1e-4)


def test_two_link_rest_to_rest():
    X = [[0.5 * np.pi, -0.75 * np.pi], [0.75 * np.pi, -0.75 * np.pi]]
    est = TrajectoryOptimizer(segments=4, steps=20).fit(X)
    assert est.report_.converged and est.n_iter_ > 0
    np.testing.assert_allclose(est.predict([1.0])[0], X[1], atol=1e-7)
    np.testing.assert_allclose(est.predict_velocity([0.0, 1.0]), 0.0, atol=1e-7)


def test_params_and_clone():
    est = TrajectoryOptimizer(cost_mode="acceleration", segments=3, continuation=(0.5, 1.0))
    params = est.get_params()
    assert params["segments"] == 3 and params["continuation"] == (0.5, 1.0)
    other = clone(est).set_params(tol=1e-6)
    assert other.tol == 1e-6 and est.tol == 1e-8
    assert "segments=3" in repr(est)


def test_input_validation():
    est = TrajectoryOptimizer(model=euclidean_model(2), segments=2, steps=10)
    with pytest.raises(ValueError, match="columns"):
        est.fit([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    with pytest.raises(ValueError, match="rows"):
        est.fit(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        est.fit([[0.0, 0.0]])
    with pytest.raises(ValueError):
        est.fit([[0.0, np.nan], [1.0, 1.0]])


def test_predict_before_fit_and_out_of_range():
    est = TrajectoryOptimizer(model=euclidean_model(1), segments=2, steps=10)
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit([[0.0], [1.0]])
    with pytest.raises(ValueError, match="times"):
        est.predict([1.5])


def test_non_convergence_warns():
    est = TrajectoryOptimizer(model=two_link_model(), max_iter=1, continuation=(1.0,), segments=4, steps=20)
    with pytest.warns(ConvergenceWarning):
        est.fit([[0.5 * np.pi, -0.75 * np.pi], [0.75 * np.pi, -0.75 * np.pi]])
    assert not est.report_.converged
