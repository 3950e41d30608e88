"""Nonlinear solvers for the diagonal-nonlinearity SPD system.

The workhorse is a damped Jacobian-smoothing Newton method: each iteration
linearizes with the derivative of an arc-smoothed nonlinearity, backtracks
on the smoothed merit function, and then shrinks the smoothing level in
lockstep with the residual while keeping the smoothed Jacobian close to the
generalized one.  Two derivative-free baselines (fixed point and dual
iteration with a per-node resolvent) share the same preconditioned CG
linear solve so iteration counts are comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import ModelProblem
from .nodewise import mu_estimate
from .smoothing import (  # re-exported: the scalar smoothing surface
    Arc,
    KinkLadder,
    PathologicalPieceError,
    SmoothedNonlinearity,
    TangentExtension,
    build_arc,
    cdist,
    detect_window,
    eval_smoothed,
    smooth_nonlinearity,
    tangent_extendable,
)

__all__ = [
    "Arc", "KinkLadder", "PathologicalPieceError", "SmoothedNonlinearity",
    "TangentExtension", "build_arc", "cdist", "detect_window", "eval_smoothed",
    "smooth_nonlinearity", "tangent_extendable",
    "LinearSolveError", "NonConvergence", "NewtonConfig", "SolveReport",
    "SpdSolver", "spd_solve", "splu_preconditioner",
    "smoothing_newton", "fixed_point", "dual_iteration",
    "SmoothingNewtonSolver", "FixedPointSolver", "DualIterationSolver",
]


class LinearSolveError(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    """Raised when a nonlinear solver gives up; carries the report."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


# --------------------------------------------------------------------------
# shared SPD linear solve: Jacobi-preconditioned CG
# --------------------------------------------------------------------------

def spd_solve(A, b, tol: float = 1e-12, maxiter: int | None = None,
              precond: Callable[[np.ndarray], np.ndarray] | None = None,
              x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Preconditioned CG to relative residual tol; returns (x, iterations).

    Default preconditioner is Jacobi; pass ``precond`` (a callable applying
    an SPD approximation of A^-1) to accelerate mesh-scale systems.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if maxiter is None:
        maxiter = 10 * n + 200
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    if precond is None:
        dinv = 1.0 / A.diagonal()
        precond = lambda r: dinv * r
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - A @ x if x.any() else b.copy()
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, k
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolveError(
        f"CG did not reach relative residual {tol} within {maxiter} iterations"
    )


def splu_preconditioner(A) -> Callable[[np.ndarray], np.ndarray]:
    """Exact sparse LU of A as a (re-usable) CG preconditioner.

    Intended to be built once per transient run on the step matrix; the
    per-iteration diagonal perturbations are small, so CG converges in a
    handful of iterations.
    """
    lu = spla.splu(sp.csc_matrix(A))
    return lu.solve


class SpdSolver:
    """Linear-solve policy handed to the nonlinear methods."""

    def __init__(self, tol: float = 1e-12,
                 precond: Callable[[np.ndarray], np.ndarray] | None = None,
                 maxiter: int | None = None):
        self.tol = tol
        self.precond = precond
        self.maxiter = maxiter

    def solve(self, A, b) -> tuple[np.ndarray, int]:
        return spd_solve(A, b, tol=self.tol, maxiter=self.maxiter, precond=self.precond)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class SolveReport:
    """Work accounting of one nonlinear solve.

    function_evaluations counts every residual evaluation, smoothed or not
    (line-search trials included); jacobian_evaluations counts assembled
    linear-system matrices.
    """

    solver: str
    nonlinear_iterations: int = 0
    linear_iterations: int = 0
    function_evaluations: int = 0
    jacobian_evaluations: int = 0
    wall_time: float = 0.0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    CSV_HEADER = ("solver,converged,wall_time_s,nonlinear_its,linear_its,"
                  "func_evals,jac_evals,final_residual")

    def csv_row(self) -> str:
        final = self.residual_history[-1] if self.residual_history else float("nan")
        return (f"{self.solver},{int(self.converged)},{self.wall_time:.6f},"
                f"{self.nonlinear_iterations},{self.linear_iterations},"
                f"{self.function_evaluations},{self.jacobian_evaluations},"
                f"{final:.6e}")


# --------------------------------------------------------------------------
# smoothing Newton (damped, globally convergent)
# --------------------------------------------------------------------------

@dataclass
class NewtonConfig:
    """Knobs of the damped smoothing Newton iteration.

    rho: backtracking factor; alpha: residual fraction tying the smoothing
    level to the residual; eta: acceptable residual decrease ratio; gamma:
    slack of the Jacobian-consistency test; sigma: sufficient-decrease
    constant (must stay below (1-alpha)/2); mu: deviation constant of the
    smoothing (estimated from the nonlinearity when None).
    """

    rho: float = 0.1
    alpha: float = 0.1
    eta: float = 0.1
    gamma: float = 10.0
    sigma: float = 1e-4
    mu: float | None = None
    tol: float = 1e-11
    max_iter: int = 60
    initial_width: float = 1.0
    linesearch_cap: int = 60
    eps_halving_cap: int = 60

    def __post_init__(self):
        for name in ("rho", "alpha", "eta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.sigma < 0.5 * (1.0 - self.alpha):
            raise ValueError("sigma must lie in (0, (1-alpha)/2)")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")


def smoothing_newton(mp: ModelProblem, cfg: NewtonConfig, x0,
                     linear: SpdSolver | None = None,
                     trace=None) -> tuple[np.ndarray, SolveReport]:
    """Damped Jacobian-smoothing Newton for A u + F(u) = f.

    Globally convergent for admissible smoothings with a locally Q-quadratic
    tail; terminates when ||A x + F(x) - f||_2 <= cfg.tol.  ``trace``, if
    given, receives a dict of per-iteration internals (step size, merit
    decrease, smoothing level, smoothed diagonal) for diagnostics.
    """
    lin = linear or SpdSolver()
    rep = SolveReport(solver="smoothing_newton")
    t0 = time.perf_counter()
    sm = mp.F.smoother(cfg.initial_width)
    mu = cfg.mu if cfg.mu is not None else max(mu_estimate(mp.F, cfg.initial_width), 1e-30)

    x = np.asarray(x0, dtype=float).copy()
    Fx = mp.F.value(x)
    H = mp.A @ x + Fx - mp.f
    nrm = float(np.linalg.norm(H))
    rep.function_evaluations += 1
    rep.residual_history.append(nrm)

    if nrm <= cfg.tol:
        rep.converged = True
        rep.wall_time = time.perf_counter() - t0
        return x, rep

    beta = nrm
    eps = cfg.alpha * beta / (2.0 * mu)

    for _ in range(cfg.max_iter):
        # (1) linearize with the smoothed slope at the current iterate
        Fs, Fd = sm.value_deriv(x, eps)
        rep.function_evaluations += 1
        J = mp.A + sp.diags(Fd)
        rep.jacobian_evaluations += 1
        d, its = lin.solve(sp.csr_matrix(J), -H)
        rep.linear_iterations += its

        # (2) backtrack on the smoothed merit against the true merit level
        theta_true = 0.5 * nrm * nrm
        Hs = mp.A @ x + Fs - mp.f
        merit_here = 0.5 * float(Hs @ Hs)
        m = 0
        while True:
            t = cfg.rho ** m
            x_trial = x + t * d
            Fs_trial, _ = sm.value_deriv(x_trial, eps)
            rep.function_evaluations += 1
            Hs_trial = mp.A @ x_trial + Fs_trial - mp.f
            merit_trial = 0.5 * float(Hs_trial @ Hs_trial)
            if merit_trial - merit_here <= -2.0 * cfg.sigma * t * theta_true:
                break
            m += 1
            if m > cfg.linesearch_cap:
                rep.wall_time = time.perf_counter() - t0
                rep.message = (f"line search stagnated after {cfg.linesearch_cap} backtracks "
                               f"at residual {nrm:.3e} (float floor or tol too tight)")
                raise NonConvergence(rep.message, rep)
        if trace is not None:
            trace(dict(step=t, merit_drop=merit_trial - merit_here,
                       required=-2.0 * cfg.sigma * t * theta_true,
                       eps=eps, smoothed_diag=Fd, residual=nrm))
        x = x_trial
        Fx = mp.F.value(x)
        H = mp.A @ x + Fx - mp.f
        nrm = float(np.linalg.norm(H))
        rep.function_evaluations += 1
        rep.residual_history.append(nrm)
        rep.nonlinear_iterations += 1

        if nrm <= cfg.tol:
            rep.converged = True
            rep.wall_time = time.perf_counter() - t0
            return x, rep

        # (3) shrink the smoothing level when the residual made progress
        deviation = float(np.linalg.norm(Fs_trial - Fx))
        if nrm <= max(cfg.eta * beta, deviation / cfg.alpha):
            beta = nrm
            eps_new = min(cfg.alpha * beta / (2.0 * mu), 0.5 * eps)
            hal = 0
            while float(np.linalg.norm(sm.hull_distance(x, eps_new))) > cfg.gamma * beta:
                eps_new *= 0.5
                hal += 1
                if hal > cfg.eps_halving_cap:
                    rep.wall_time = time.perf_counter() - t0
                    rep.message = "smoothing level selection failed (consistency test)"
                    raise NonConvergence(rep.message, rep)
            eps = eps_new

    rep.wall_time = time.perf_counter() - t0
    rep.message = f"no convergence within {cfg.max_iter} iterations"
    raise NonConvergence(rep.message, rep)


# --------------------------------------------------------------------------
# derivative-free baselines
# --------------------------------------------------------------------------

def fixed_point(mp: ModelProblem, beta: float, tol: float = 1e-11,
                max_iter: int = 2000, x0=None,
                linear: SpdSolver | None = None) -> tuple[np.ndarray, SolveReport]:
    """Iterate (A + beta I) u+ = f - F(u) + beta u until the residual drops.

    The matrix never changes, so its preconditioner is built once.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    # the iteration has no self-correction, so inner solves must be tighter
    # than the outer tolerance
    lin = linear or SpdSolver(tol=1e-14)
    rep = SolveReport(solver="fixed_point")
    t0 = time.perf_counter()
    B = sp.csr_matrix(mp.A + beta * sp.identity(mp.n, format="csr"))
    rep.jacobian_evaluations = 1
    x = np.zeros(mp.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    Fx = mp.F.value(x)
    H = mp.A @ x + Fx - mp.f
    nrm = float(np.linalg.norm(H))
    rep.function_evaluations += 1
    rep.residual_history.append(nrm)
    while nrm > tol:
        if not np.isfinite(nrm):
            rep.wall_time = time.perf_counter() - t0
            rep.message = "fixed point diverged"
            raise NonConvergence(rep.message, rep)
        if rep.nonlinear_iterations >= max_iter:
            rep.wall_time = time.perf_counter() - t0
            rep.message = f"fixed point did not converge in {max_iter} iterations"
            raise NonConvergence(rep.message, rep)
        rhs = mp.f - (Fx - beta * x)
        x, its = lin.solve(B, rhs)
        rep.linear_iterations += its
        Fx = mp.F.value(x)
        H = mp.A @ x + Fx - mp.f
        nrm = float(np.linalg.norm(H))
        rep.function_evaluations += 1
        rep.residual_history.append(nrm)
        rep.nonlinear_iterations += 1
    rep.converged = True
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def _resolvent(F, y: np.ndarray, lam: float, beta: float,
               seed: np.ndarray) -> np.ndarray:
    """Solve (1 - lam*beta) z + lam*F(z) = y componentwise.

    The left side is strictly increasing (requires 1 - lam*beta > 0), so an
    expanding bracket plus synchronized bisection is unconditionally safe; a
    guarded Newton step polishes the result.
    """
    a = 1.0 - lam * beta

    def g(z):
        return a * z + lam * F.value(z)

    step = 1.0 + 0.1 * np.abs(y)
    lo = seed - step
    hi = seed + step
    for _ in range(200):
        glo = g(lo)
        bad = glo > y
        if not np.any(bad):
            break
        lo = np.where(bad, lo - step, lo)
        step = np.where(bad, 2.0 * step, step)
    else:
        raise PathologicalPieceError("resolvent bracketing failed from below")
    step = 1.0 + 0.1 * np.abs(y)
    for _ in range(200):
        ghi = g(hi)
        bad = ghi < y
        if not np.any(bad):
            break
        hi = np.where(bad, hi + step, hi)
        step = np.where(bad, 2.0 * step, step)
    else:
        raise PathologicalPieceError("resolvent bracketing failed from above")

    scale = 1.0 + np.maximum(np.abs(lo), np.abs(hi))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        high = g(mid) >= y
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
        if np.all(hi - lo <= 1e-14 * scale):
            break
    z = 0.5 * (lo + hi)
    _, dp = F.deriv_sides(z)
    gp = a + lam * dp
    z_newton = z - (g(z) - y) / gp
    return np.clip(z_newton, lo, hi)


def dual_iteration(mp: ModelProblem, beta: float, lam: float, tol: float = 1e-11,
                   max_iter: int = 2000, x0=None,
                   linear: SpdSolver | None = None) -> tuple[np.ndarray, SolveReport]:
    """Alternate (A + beta I) u+ = f - q with the resolvent update of q.

    q converges to F(u*) - beta u*; each sweep costs one linear solve plus n
    scalar monotone root solves.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 1.0 - lam * beta > 0:
        raise ValueError("need 1 - lambda*beta > 0 for a monotone resolvent")
    lin = linear or SpdSolver(tol=1e-14)
    rep = SolveReport(solver="dual_iteration")
    t0 = time.perf_counter()
    B = sp.csr_matrix(mp.A + beta * sp.identity(mp.n, format="csr"))
    rep.jacobian_evaluations = 1
    x = np.zeros(mp.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    q = mp.F.value(x) - beta * x
    H = mp.A @ x + mp.F.value(x) - mp.f
    nrm = float(np.linalg.norm(H))
    rep.function_evaluations += 1
    rep.residual_history.append(nrm)
    while nrm > tol:
        if not np.isfinite(nrm):
            rep.wall_time = time.perf_counter() - t0
            rep.message = "dual iteration diverged"
            raise NonConvergence(rep.message, rep)
        if rep.nonlinear_iterations >= max_iter:
            rep.wall_time = time.perf_counter() - t0
            rep.message = f"dual iteration did not converge in {max_iter} iterations"
            raise NonConvergence(rep.message, rep)
        x, its = lin.solve(B, mp.f - q)
        rep.linear_iterations += its
        y = x + lam * q
        z = _resolvent(mp.F, y, lam, beta, seed=x)
        q = (y - z) / lam
        H = mp.A @ x + mp.F.value(x) - mp.f
        nrm = float(np.linalg.norm(H))
        rep.function_evaluations += 1
        rep.residual_history.append(nrm)
        rep.nonlinear_iterations += 1
    rep.converged = True
    rep.wall_time = time.perf_counter() - t0
    return x, rep


# --------------------------------------------------------------------------
# step-solver adapters for the transient driver
# --------------------------------------------------------------------------

class SmoothingNewtonSolver:
    name = "smoothing_newton"

    def __init__(self, cfg: NewtonConfig | None = None, linear: SpdSolver | None = None):
        self.cfg = cfg or NewtonConfig()
        self.linear = linear

    def solve(self, mp: ModelProblem, x0) -> tuple[np.ndarray, SolveReport]:
        return smoothing_newton(mp, self.cfg, x0, linear=self.linear)


class FixedPointSolver:
    name = "fixed_point"

    def __init__(self, beta: float = 0.0, tol: float = 1e-11, max_iter: int = 2000,
                 linear: SpdSolver | None = None):
        self.beta = beta
        self.tol = tol
        self.max_iter = max_iter
        self.linear = linear

    def solve(self, mp, x0):
        return fixed_point(mp, self.beta, self.tol, self.max_iter, x0, linear=self.linear)


class DualIterationSolver:
    name = "dual_iteration"

    def __init__(self, beta: float = 0.0, lam: float = 1.0, tol: float = 1e-11,
                 max_iter: int = 2000, linear: SpdSolver | None = None):
        self.beta = beta
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.linear = linear

    def solve(self, mp, x0):
        return dual_iteration(mp, self.beta, self.lam, self.tol, self.max_iter, x0,
                              linear=self.linear)
