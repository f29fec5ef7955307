import warnings

import numpy as np
import pytest
from scipy.optimize import LinearConstraint, minimize

from poolgame.qp import solve_convex_qp


def random_qp(rng):
    n = int(rng.integers(2, 8))
    L = rng.normal(size=(n, int(rng.integers(0, n + 1))))
    H = L @ L.T
    c = rng.normal(size=n)
    G = rng.normal(size=(int(rng.integers(1, 8)), n))
    E = rng.normal(size=(int(rng.integers(0, 3)), n))
    z0 = rng.uniform(-1, 1, n)
    h = G @ z0 + rng.uniform(0, 1, G.shape[0])
    e = E @ z0
    G = np.vstack([G, np.eye(n), -np.eye(n)])
    h = np.concatenate([h, np.full(n, 3.0), np.full(n, 3.0)])
    return H, c, E, e, G, h, z0


def test_matches_scipy_on_random_convex_qps():
    rng = np.random.default_rng(0)
    for _ in range(150):
        H, c, E, e, G, h, z0 = random_qp(rng)
        r = solve_convex_qp(H, c, E, e, G, h, z0)
        assert r.optimal
        assert (G @ r.z - h).max() <= 1e-7
        if E.size:
            assert np.abs(E @ r.z - e).max() <= 1e-7
        cons = [LinearConstraint(G, -np.inf, h)] + ([LinearConstraint(E, e, e)] if E.size else [])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ref = minimize(lambda z: 0.5 * z @ H @ z + c @ z, z0, jac=lambda z: H @ z + c, constraints=cons,
                           method="trust-constr", options={"gtol": 1e-12, "xtol": 1e-12, "maxiter": 5000})
        assert r.objective <= ref.fun + 1e-6 * (1 + abs(ref.fun))


def test_linear_objective_moves_to_a_vertex():
    # min -x - y over the unit box starting at the centre
    r = solve_convex_qp(np.zeros((2, 2)), [-1.0, -1.0], np.zeros((0, 2)), [],
                        np.vstack([np.eye(2), -np.eye(2)]), [1, 1, 0, 0], [0.5, 0.5])
    assert r.optimal
    assert r.z == pytest.approx([1.0, 1.0])


def test_unconstrained_minimizer_inside():
    H = np.diag([2.0, 4.0])
    r = solve_convex_qp(H, [-2.0, -4.0], np.zeros((0, 2)), [], np.vstack([np.eye(2), -np.eye(2)]),
                        [5, 5, 5, 5], [0.0, 0.0])
    assert r.z == pytest.approx([1.0, 1.0])
