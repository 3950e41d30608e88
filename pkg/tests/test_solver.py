import numpy as np
import pytest
import scipy.sparse as sp

from hystfem.hysteresis import AffinePiece, PlayParams, ScalarPiecewiseC2
from hystfem.model import ModelProblem, model_from_scalars
from hystfem.nodewise import PlayNodewise
from hystfem.solver import (
    LinearSolveError,
    NewtonConfig,
    NonConvergence,
    SolveReport,
    _resolvent,
    dual_iteration,
    fixed_point,
    smoothing_newton,
    spd_solve,
)

from conftest import lambda_min_estimate

P = PlayParams(-0.5, 0.5, 2.0)


def relu_phi():
    return ScalarPiecewiseC2([0.0], [AffinePiece(0.0, 0, 0), AffinePiece(1.0, 0, 0)], 1.0)


def scalar_problem(f):
    A = sp.csr_matrix(np.array([[1.0]]))
    return model_from_scalars(A, np.array([float(f)]), [relu_phi()])


class TestSpdSolve:
    def test_identity_one_iteration(self):
        A = sp.identity(8, format="csr")
        b = np.arange(8.0)
        x, it = spd_solve(A, b)
        assert np.allclose(x, b)
        assert it <= 1

    def test_1d_system_vs_dense(self, rng):
        from hystfem.fem import assemble_mass, assemble_stiffness, build_uniform_mesh

        m = build_uniform_mesh(1, 50)
        A = (assemble_mass(m) + assemble_stiffness(m)).tocsr()
        b = rng.normal(size=A.shape[0])
        x, _ = spd_solve(A, b, tol=1e-13)
        x_dense = np.linalg.solve(A.toarray(), b)
        assert np.abs(x - x_dense).max() < 1e-10

    def test_spd_property(self, rng):
        from hystfem.fem import assemble_mass, build_uniform_mesh

        A = assemble_mass(build_uniform_mesh(2, 4))
        for _ in range(5):
            z = rng.normal(size=A.shape[0])
            assert z @ (A @ z) > 0

    def test_zero_rhs(self):
        A = sp.identity(4, format="csr")
        x, it = spd_solve(A, np.zeros(4))
        assert np.all(x == 0) and it == 0

    def test_iteration_cap(self):
        from hystfem.fem import assemble_stiffness, build_uniform_mesh
        from hystfem.fem import apply_dirichlet

        m = build_uniform_mesh(1, 200)
        A, b = apply_dirichlet(assemble_stiffness(m), np.ones(201), {0: 0.0, 200: 0.0}, m)
        with pytest.raises(LinearSolveError):
            spd_solve(A.tocsr(), b, tol=1e-14, maxiter=3)


class TestSmoothingNewton:
    def test_active_branch(self):
        x, rep = smoothing_newton(scalar_problem(1.0), NewtonConfig(tol=1e-13), np.array([0.0]))
        assert abs(x[0] - 0.5) < 1e-12
        assert rep.converged
        assert len(rep.residual_history) == rep.nonlinear_iterations + 1

    def test_inactive_branch(self):
        x, rep = smoothing_newton(scalar_problem(-1.0), NewtonConfig(tol=1e-13), np.array([0.0]))
        assert abs(x[0] + 1.0) < 1e-12

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            NewtonConfig(sigma=0.5)  # must be below (1 - alpha)/2
        with pytest.raises(ValueError):
            NewtonConfig(rho=1.0)
        with pytest.raises(ValueError):
            NewtonConfig(gamma=-1.0)

    def test_merit_decrease_is_sufficient(self, rng):
        # the literal accepted-step inequality of the backtracking rule
        records = []
        mp = _random_play_problem(rng, 20)
        x0 = rng.normal(size=20)
        smoothing_newton(mp, NewtonConfig(tol=1e-11), x0, trace=records.append)
        assert records
        for rec in records:
            assert rec["merit_drop"] <= rec["required"] + 1e-14

    def test_newton_matrix_stays_spd(self, rng):
        records = []
        mp = _random_play_problem(rng, 15)
        x0 = rng.normal(size=15)
        smoothing_newton(mp, NewtonConfig(tol=1e-11), x0, trace=records.append)
        lam_A = np.linalg.eigvalsh(mp.A.toarray()).min()
        for rec in records:
            J = mp.A.toarray() + np.diag(rec["smoothed_diag"])
            lam = np.linalg.eigvalsh(J).min()
            assert lam >= lam_A - 1e-10

    def test_max_iter_raises_with_report(self):
        # from the inactive side the solve needs two iterations; allow one
        mp = scalar_problem(1.0)
        with pytest.raises(NonConvergence) as exc:
            smoothing_newton(mp, NewtonConfig(tol=1e-13, max_iter=1), np.array([-10.0]))
        assert exc.value.report.residual_history
        assert not exc.value.report.converged


def _random_play_problem(rng, n, spd_range=(0.2, 3.0)):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = rng.uniform(*spd_range, n)
    A = sp.csr_matrix(Q @ np.diag(lam) @ Q.T)
    hist = rng.normal(size=n)
    scale = rng.uniform(0.05, 2.0, n)
    off = rng.normal(size=n)
    F = PlayNodewise(P, hist, scale, off)
    f = rng.normal(scale=2.0, size=n)
    return ModelProblem(A, f, F)


class TestGlobalConvergence:
    def test_random_problems(self):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(1, 51))
            mp = _random_play_problem(rng, n)
            x0 = rng.normal(scale=3.0, size=n)
            x, rep = smoothing_newton(mp, NewtonConfig(tol=1e-10), x0)
            assert rep.converged, f"trial {trial} failed"
            assert np.linalg.norm(mp.residual(x)) <= 1e-10

    def test_quadratic_tail(self):
        rng = np.random.default_rng(3)
        mp = _random_play_problem(rng, 30)
        x0 = rng.normal(scale=2.0, size=30)
        tol = 1e-11
        _, rep = smoothing_newton(mp, NewtonConfig(tol=tol), x0)
        hist = rep.residual_history
        stop = next(i for i, r in enumerate(hist) if r <= tol)
        # log-residual second difference over the converging tail is
        # strongly negative (faster-than-linear decay)
        logs = np.log(hist[stop - 2:stop + 1])
        d2 = np.diff(logs, 2)
        assert (d2 < -0.5).all()

    def test_cross_solver_agreement(self):
        # all three solvers on the same problems; the baselines need their
        # parameters matched to the problem scale (beta at half the
        # nonlinearity Lipschitz bound, lambda at twice the inverse of the
        # smallest matrix eigenvalue) to contract on arbitrary draws
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 30))
            mp = _random_play_problem(rng, n)
            x0 = rng.normal(size=n)
            xn, _ = smoothing_newton(mp, NewtonConfig(tol=1e-12), x0)
            beta = 0.5 * float(mp.F.lipschitz_per_node().max()) + 0.1
            xf, _ = fixed_point(mp, beta=beta, tol=1e-12, max_iter=50_000, x0=x0)
            lam = 2.0 / lambda_min_estimate(mp.A)
            xd, _ = dual_iteration(mp, beta=0.0, lam=lam, tol=1e-12,
                                   max_iter=5_000, x0=x0)
            assert np.abs(xn - xf).max() < 1e-9
            assert np.abs(xn - xd).max() < 1e-9

    def test_strong_monotonicity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            mp = _random_play_problem(rng, n)
            lam_min = lambda_min_estimate(mp.A)
            u1 = rng.normal(scale=2.0, size=n)
            u2 = rng.normal(scale=2.0, size=n)
            lhs = (mp.residual(u1) - mp.residual(u2)) @ (u1 - u2)
            rhs = lam_min * np.linalg.norm(u1 - u2) ** 2
            assert lhs >= rhs - 1e-8


class TestFixedPoint:
    def test_hand_iteration(self):
        mp = scalar_problem(1.0)
        x, rep = fixed_point(mp, beta=1.0, tol=1e-14, x0=np.array([0.0]))
        assert x[0] == pytest.approx(0.5, abs=1e-14)
        # iterates 0 -> 1/2 (exact fixed point)
        assert rep.nonlinear_iterations == 1
        assert rep.jacobian_evaluations == 1

    def test_linear_problem_single_iteration(self):
        A = sp.csr_matrix(np.diag([2.0, 3.0]))
        phi0 = ScalarPiecewiseC2([], [AffinePiece(0.0, 0, 0)], 0.0)
        mp = model_from_scalars(A, np.array([2.0, 3.0]), [phi0, phi0])
        x, rep = fixed_point(mp, beta=0.0, tol=1e-13)
        assert np.allclose(x, [1.0, 1.0])
        assert rep.nonlinear_iterations == 1

    def test_nonconvergence_reported(self):
        mp = scalar_problem(1.0)
        with pytest.raises(NonConvergence) as exc:
            fixed_point(mp, beta=0.0, tol=1e-30, max_iter=3, x0=np.array([5.0]))
        assert not exc.value.report.converged

    def test_rejects_negative_beta(self):
        with pytest.raises(ValueError):
            fixed_point(scalar_problem(1.0), beta=-1.0)


class TestDualIteration:
    def test_resolvent_piecewise(self):
        mp = scalar_problem(1.0)
        # z + max(z, 0) = y  ->  z = y/2 for y >= 0 else y
        for y, expect in ((2.0, 1.0), (0.5, 0.25), (-1.5, -1.5), (0.0, 0.0)):
            z = _resolvent(mp.F, np.array([y]), lam=1.0, beta=0.0, seed=np.array([0.0]))
            assert abs(z[0] - expect) < 1e-12

    def test_scalar_example(self):
        x, rep = dual_iteration(scalar_problem(1.0), beta=0.0, lam=1.0,
                                tol=1e-12, x0=np.array([0.0]))
        assert abs(x[0] - 0.5) < 1e-11

    def test_linear_problem(self):
        A = sp.csr_matrix(np.diag([2.0]))
        phi0 = ScalarPiecewiseC2([], [AffinePiece(0.0, 0, 0)], 0.0)
        mp = model_from_scalars(A, np.array([4.0]), [phi0])
        x, rep = dual_iteration(mp, beta=0.0, lam=1.0, tol=1e-13)
        assert abs(x[0] - 2.0) < 1e-12
        assert rep.nonlinear_iterations <= 2

    def test_validates_parameters(self):
        mp = scalar_problem(1.0)
        with pytest.raises(ValueError):
            dual_iteration(mp, beta=2.0, lam=1.0)  # 1 - lam*beta <= 0
        with pytest.raises(ValueError):
            dual_iteration(mp, beta=0.0, lam=0.0)


def test_linear_problem_all_solvers_finish_fast():
    # F identically zero: every method reduces to (at most) two linear solves
    A = sp.csr_matrix(np.diag([1.5, 2.5, 3.5]))
    phi0 = ScalarPiecewiseC2([], [AffinePiece(0.0, 0, 0)], 0.0)
    mp = model_from_scalars(A, np.array([3.0, 5.0, 7.0]), [phi0] * 3)
    expect = np.array([2.0, 2.0, 2.0])
    xn, rn = smoothing_newton(mp, NewtonConfig(tol=1e-12), np.zeros(3))
    xf, rf = fixed_point(mp, beta=0.0, tol=1e-12)
    xd, rd = dual_iteration(mp, beta=0.0, lam=1.0, tol=1e-12)
    for x, rep in ((xn, rn), (xf, rf), (xd, rd)):
        assert np.allclose(x, expect, atol=1e-11)
        assert rep.nonlinear_iterations <= 2


def test_report_invariant_and_csv():
    x, rep = smoothing_newton(scalar_problem(1.0), NewtonConfig(tol=1e-12), np.array([3.0]))
    assert len(rep.residual_history) == rep.nonlinear_iterations + 1
    row = rep.csv_row()
    assert row.startswith("smoothing_newton,1,")
    assert len(row.split(",")) == len(SolveReport.CSV_HEADER.split(","))
