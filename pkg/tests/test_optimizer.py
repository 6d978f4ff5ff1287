import numpy as np
import pytest

from tiltshift.geometry import efficient_direction
from tiltshift.optimizer import (
    InitializationError,
    RBFGSOptions,
    RetractionError,
    bfgs_update,
    fd_gradient,
    init_on_manifold,
    make_point,
    multistart,
    project_tangent,
    rbfgs,
    retract,
    transport,
)


class QuadraticLevelSet:
    """G(delta) = delta' A delta, exact gradient; test constraint."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)

    def value(self, delta):
        delta = np.asarray(delta, dtype=float)
        return float(delta @ self.A @ delta)

    def grad(self, delta):
        return 2.0 * self.A @ np.asarray(delta, dtype=float)


def sphere():
    return QuadraticLevelSet(np.eye(3))


class TestProjectTangent:
    def test_tangent_vector_unchanged(self):
        n = np.array([1.0, 0.0, 0.0])
        v = np.array([0.0, 2.0, -1.0])
        np.testing.assert_allclose(project_tangent(v, n), v)

    def test_normal_maps_to_zero(self):
        n = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(project_tangent(n, n), 0.0, atol=1e-15)

    def test_pythagorean_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = rng.normal(size=4)
            n /= np.linalg.norm(n)
            v = rng.normal(size=4)
            pv = project_tangent(v, n)
            assert np.linalg.norm(pv) ** 2 + (n @ v) ** 2 == pytest.approx(
                np.linalg.norm(v) ** 2, abs=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        n = rng.normal(size=5)
        n /= np.linalg.norm(n)
        v = rng.normal(size=5)
        once = project_tangent(v, n)
        np.testing.assert_allclose(project_tangent(once, n), once, atol=1e-14)


class TestRetract:
    def test_zero_step_identity(self):
        con = sphere()
        delta = np.array([1.0, 0.0, 0.0])
        out = retract(delta, np.zeros(3), con, c=1.0, feas_tol=1e-10)
        np.testing.assert_allclose(out.delta, delta)

    def test_sphere_renormalization(self):
        con = sphere()
        delta = np.array([1.0, 0.0, 0.0])
        xi = np.array([0.0, 0.1, -0.05])  # tangent at delta
        out = retract(delta, xi, con, c=1.0, feas_tol=1e-12)
        assert np.linalg.norm(out.delta) == pytest.approx(1.0, abs=1e-6)
        direct = (delta + xi) / np.linalg.norm(delta + xi)
        np.testing.assert_allclose(out.delta, direct, atol=1e-6)

    def test_first_order_accuracy(self):
        # || R(t xi) - (delta + t xi) || = O(t^2): slope ~2 on log-log
        con = QuadraticLevelSet(np.diag([2.0, 1.0, 0.5]))
        c = 1.0
        delta = init_on_manifold(np.array([1.0, 1.0, 1.0]), con, c, feas_tol=1e-14)
        point = make_point(con, delta)
        xi = project_tangent(np.array([0.3, -0.2, 0.5]), point.normal)
        errs = []
        steps = [1e-2, 1e-3, 1e-4]
        for t in steps:
            out = retract(delta, t * xi, con, c, feas_tol=1e-15)
            errs.append(np.linalg.norm(out.delta - (delta + t * xi)))
        slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.2)

    def test_divergence_raises(self):
        con = sphere()
        delta = np.array([1.0, 0.0, 0.0])
        with pytest.raises(RetractionError):
            # a step past the origin makes the correction diverge or stall
            retract(delta, np.array([-1.0 - 1e-9, 0.0, 0.0]), con, c=1.0,
                    feas_tol=1e-14, max_corrections=3)


class TestTransport:
    def test_unchanged_when_already_tangent(self):
        n = np.array([0.0, 0.0, 1.0])
        v = np.array([1.0, -2.0, 0.0])
        np.testing.assert_allclose(transport(v, n), v)

    def test_normal_killed(self):
        n = np.array([0.6, 0.8, 0.0])
        np.testing.assert_allclose(transport(n, n), 0.0, atol=1e-15)

    def test_contraction(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = rng.normal(size=4)
            n /= np.linalg.norm(n)
            v = rng.normal(size=4)
            assert np.linalg.norm(transport(v, n)) <= np.linalg.norm(v) + 1e-12


class TestBfgsUpdate:
    def test_secant_property(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            M = rng.normal(size=(5, 5))
            B = M @ M.T + np.eye(5)
            a = rng.normal(size=5)
            b = rng.normal(size=5)
            if b @ a <= 1e-8:
                b = -b
            B_new = bfgs_update(B, a, b)
            np.testing.assert_allclose(B_new @ b, a, atol=1e-8)
            np.testing.assert_allclose(B_new, B_new.T, atol=1e-12)


class TestRBFGS:
    def linear_problem(self):
        # min b'delta on {delta' A^2 delta = c^2}, A = diag(2,1), b = (1,1)
        A = np.diag([2.0, 1.0])
        con = QuadraticLevelSet(A @ A)
        b = np.array([1.0, 1.0])
        c = 1.0
        A2inv = np.linalg.inv(A @ A)
        closed = -c * A2inv @ b / np.sqrt(b @ A2inv @ b)
        return con, b, c, closed

    def test_stationary_start_returns_immediately(self):
        con, b, c, closed = self.linear_problem()
        res = rbfgs(lambda d: float(b @ d), con, c, closed,
                    gradient=lambda d: b)
        assert res.n_iter == 0 and res.converged

    def test_linear_objective_matches_lagrange_closed_form(self):
        con, b, c, closed = self.linear_problem()
        # independent oracle: dense parameter sweep of the ellipse
        thetas = np.linspace(0, 2 * np.pi, 400_000, endpoint=False)
        ellipse = np.column_stack([0.5 * c * np.cos(thetas), c * np.sin(thetas)])
        grid_best = ellipse[np.argmin(ellipse @ b)]
        np.testing.assert_allclose(grid_best, closed, atol=1e-5)
        start = init_on_manifold(np.array([1.0, 0.3]), con, c)
        res = rbfgs(lambda d: float(b @ d), con, c, start,
                    options=RBFGSOptions(grad_tol=1e-9))
        np.testing.assert_allclose(res.delta, closed, atol=1e-4)

    def test_quadratic_objective_recovers_efficient_direction(self):
        rng = np.random.default_rng(4)
        M = rng.normal(size=(3, 3))
        Sigma = M @ M.T + 0.5 * np.eye(3)
        con = QuadraticLevelSet(Sigma @ Sigma)
        c = 0.8
        target = efficient_direction(Sigma, c)
        start = init_on_manifold(rng.normal(size=3), con, c)
        res = rbfgs(lambda d: float(d @ Sigma @ d), con, c, start,
                    options=RBFGSOptions(grad_tol=1e-10),
                    gradient=lambda d: 2.0 * Sigma @ d)
        sign = np.sign(res.delta @ target)
        np.testing.assert_allclose(sign * res.delta, target, atol=1e-3)

    def test_iterates_feasible_and_monotone(self):
        con, b, c, _ = self.linear_problem()
        start = init_on_manifold(np.array([0.2, 1.0]), con, c)
        res = rbfgs(lambda d: float(b @ d), con, c, start)
        feas = [row["feasibility"] for row in res.trace]
        objs = [row["objective"] for row in res.trace]
        assert max(feas) <= 1e-6 * c * c + 1e-15
        assert all(b2 <= a2 + 1e-12 for a2, b2 in zip(objs, objs[1:]))

    def test_infeasible_start_rejected(self):
        con, b, c, _ = self.linear_problem()
        with pytest.raises(InitializationError):
            rbfgs(lambda d: float(b @ d), con, c, np.array([5.0, 5.0]))

    def test_fd_gradient_matches_analytic(self):
        rng = np.random.default_rng(5)
        Q = rng.normal(size=(4, 4))
        Q = Q @ Q.T
        x = rng.normal(size=4)
        g = fd_gradient(lambda v: float(v @ Q @ v), x, h=1e-5)
        np.testing.assert_allclose(g, 2 * Q @ x, rtol=1e-5, atol=1e-7)


class TestInitOnManifold:
    def test_sphere_scaling(self):
        out = init_on_manifold(np.array([1.0, 0.0, 0.0]), sphere(), c=2.0)
        np.testing.assert_allclose(out, [2.0, 0.0, 0.0], atol=1e-5)

    def test_general_quadratic_feasible(self):
        rng = np.random.default_rng(6)
        M = rng.normal(size=(4, 4))
        con = QuadraticLevelSet(M @ M.T + np.eye(4))
        c = 0.7
        for _ in range(10):
            out = init_on_manifold(rng.normal(size=4), con, c)
            assert con.value(out) == pytest.approx(c * c, abs=1e-6 * c * c)

    def test_scale_monotone_in_c(self):
        con = QuadraticLevelSet(np.diag([3.0, 1.0]))
        direction = np.array([1.0, 1.0])
        ts = [np.linalg.norm(init_on_manifold(direction, con, c))
              for c in np.linspace(0.1, 1.0, 8)]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_zero_direction_rejected(self):
        with pytest.raises(InitializationError):
            init_on_manifold(np.zeros(3), sphere(), c=1.0)


class TestMultistart:
    def test_unique_optimum_all_starts_agree(self):
        con = QuadraticLevelSet(np.diag([4.0, 1.0]))
        b = np.array([1.0, 1.0])
        c = 1.0
        winner, runs = multistart(lambda d: float(b @ d), con, c, q=2,
                                  n_starts=6, seed=0,
                                  gradient=lambda d: b)
        for run in runs:
            np.testing.assert_allclose(run.delta, winner.delta, atol=1e-3)

    def test_single_start_equals_rbfgs(self):
        con = QuadraticLevelSet(np.diag([4.0, 1.0]))
        b = np.array([1.0, -0.5])
        winner, runs = multistart(lambda d: float(b @ d), con, 1.0, q=2,
                                  n_starts=1, seed=3, gradient=lambda d: b)
        rng = np.random.default_rng(np.random.SeedSequence(3).spawn(1)[0])
        start = init_on_manifold(rng.standard_normal(2), con, 1.0)
        solo = rbfgs(lambda d: float(b @ d), con, 1.0, start, gradient=lambda d: b)
        assert winner.value == solo.value
        np.testing.assert_array_equal(winner.delta, solo.delta)

    def test_deterministic(self):
        con = QuadraticLevelSet(np.diag([2.0, 1.0, 0.5]))
        b = np.array([0.3, -1.0, 0.2])
        w1, r1 = multistart(lambda d: float(b @ d), con, 0.5, q=3, n_starts=4,
                            seed=11, gradient=lambda d: b)
        w2, r2 = multistart(lambda d: float(b @ d), con, 0.5, q=3, n_starts=4,
                            seed=11, gradient=lambda d: b)
        np.testing.assert_array_equal(w1.delta, w2.delta)
        for a2, b2 in zip(r1, r2):
            np.testing.assert_array_equal(a2.delta, b2.delta)

    def test_tie_breaks_to_smallest_index(self):
        con = sphere()
        winner, runs = multistart(lambda d: 1.0, con, 1.0, q=3, n_starts=3,
                                  seed=5, gradient=lambda d: np.zeros(3))
        assert winner.start_index == 0
