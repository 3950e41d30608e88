"""Backward-Euler transient driver for parabolic problems with hysteresis.

Each step assembles the nonlinear system (M + tau*K) u + F(u) = rhs, where F
is the mass-lumped hysteresis term built from per-node level functions, hands
it to a nonlinear solver, then advances every node's memory with the new
nodal input.  Memories are sufficient statistics (play value or Preisach
play array), never full input histories.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .fem import Mesh, assemble_lumped_mass, assemble_mass, assemble_stiffness
from .hysteresis import (
    DrivenInit,
    ExplicitInit,
    PlayParams,
    PreisachParams,
    play_clamp,
    unit_play_clamp,
)
from .model import ModelProblem
from .nodewise import PlayNodewise, PreisachNodewise
from .solver import NonConvergence, SolveReport, SpdSolver, splu_preconditioner


@dataclass(frozen=True)
class PlayHysteresis:
    params: PlayParams
    w0: Callable | float = 0.0


@dataclass(frozen=True)
class PreisachHysteresis:
    params: PreisachParams
    init: DrivenInit | ExplicitInit | None = None  # None = all plays at zero


@dataclass(frozen=True)
class TransientProblem:
    """Semilinear or quasilinear heat problem with pointwise hysteresis.

    source/boundary/initial are callables of (coords[, t]) returning nodal
    arrays; None means identically zero.  The hysteresis acts pointwise at
    every node, boundary nodes included (their memories follow the Dirichlet
    data).
    """

    kind: str
    mesh: Mesh
    T: float
    K_steps: int
    hysteresis: PlayHysteresis | PreisachHysteresis
    source: Callable | None = None
    boundary: Callable | None = None
    initial: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("semilinear", "quasilinear"):
            raise ValueError(f"kind must be semilinear or quasilinear, got {self.kind!r}")
        if not self.T > 0:
            raise ValueError("final time must be positive")
        if self.K_steps < 0:
            raise ValueError("step count must be nonnegative")

    @property
    def tau(self) -> float:
        return self.T / self.K_steps if self.K_steps else 0.0


@dataclass
class TransientState:
    """Solution snapshot: nodal values, per-node memories, cached outputs."""

    k: int
    u: np.ndarray
    memory: np.ndarray   # (n,) play values or (n, n_r) Preisach play arrays
    w: np.ndarray        # hysteresis outputs at the current inputs


class StepContext:
    """Per-problem immutables: matrices, Dirichlet split, preconditioner."""

    def __init__(self, prob: TransientProblem):
        mesh = prob.mesh
        self.coords = mesh.vertices
        self.M = assemble_mass(mesh)
        self.K = assemble_stiffness(mesh)
        self.D = assemble_lumped_mass(mesh)
        tau = prob.tau
        self.A_full = (self.M + tau * self.K).tocsr()
        n = mesh.n_vertices
        cons = np.asarray(mesh.boundary_nodes, dtype=np.int64)
        free_mask = np.ones(n, dtype=bool)
        free_mask[cons] = False
        self.free = np.nonzero(free_mask)[0]
        self.cons = cons
        self.A_ff = sp.csr_matrix(self.A_full[np.ix_(self.free, self.free)])
        self.A_fc = sp.csr_matrix(self.A_full[np.ix_(self.free, self.cons)])
        self.linear = SpdSolver(precond=splu_preconditioner(self.A_ff))

    def boundary_values(self, prob: TransientProblem, t: float) -> np.ndarray:
        if prob.boundary is None or self.cons.size == 0:
            return np.zeros(self.cons.size)
        return np.asarray(prob.boundary(self.coords[self.cons], t), dtype=float)


def make_context(prob: TransientProblem) -> StepContext:
    return StepContext(prob)


def _hysteresis_output(prob: TransientProblem, memory: np.ndarray) -> np.ndarray:
    hy = prob.hysteresis
    if isinstance(hy, PlayHysteresis):
        return memory.copy()
    p = hy.params
    return 2.0 * (p.omega_value(memory) @ p.r_weights)


def init_state(prob: TransientProblem, ctx: StepContext | None = None) -> TransientState:
    ctx = ctx or make_context(prob)
    coords = ctx.coords
    n = coords.shape[0]
    u0 = (np.zeros(n) if prob.initial is None
          else np.broadcast_to(np.asarray(prob.initial(coords), dtype=float), (n,)).copy())
    hy = prob.hysteresis
    if isinstance(hy, PlayHysteresis):
        w0 = hy.w0(coords) if callable(hy.w0) else hy.w0
        w0 = np.broadcast_to(np.asarray(w0, dtype=float), (n,)).copy()
        memory = play_clamp(w0, u0, hy.params)
    elif isinstance(hy, PreisachHysteresis):
        r = hy.params.r_nodes
        if hy.init is None:
            memory = np.zeros((n, r.size))
        elif isinstance(hy.init, DrivenInit):
            w = np.full(r.size, hy.init.inputs[0]) - r
            for val in hy.init.inputs[1:]:
                w = unit_play_clamp(w, val, r)
            memory = np.broadcast_to(w, (n, r.size)).copy()
        elif isinstance(hy.init, ExplicitInit):
            vals = np.asarray(hy.init.values, dtype=float)
            memory = np.broadcast_to(vals, (n, r.size)).copy()
            clamped = unit_play_clamp(memory, u0[:, None], r)
            if not np.allclose(memory, clamped, rtol=0.0, atol=1e-12):
                raise ValueError("explicit play values violate the band constraint at u0")
        else:
            raise TypeError(f"unknown Preisach init policy {hy.init!r}")
        if not isinstance(hy.init, ExplicitInit):
            memory = unit_play_clamp(memory, u0[:, None], r)
    else:
        raise TypeError(f"unknown hysteresis model {hy!r}")
    return TransientState(0, u0, memory, _hysteresis_output(prob, memory))


def build_step_system(state: TransientState, prob: TransientProblem,
                      ctx: StepContext | None = None) -> ModelProblem:
    """Nonlinear system of the step k -> k+1 on the free nodes.

    A = M + tau*K; rhs_i = (M (tau*fbar + u^k))_i with fbar sampled at the
    interval midpoint; the hysteresis enters mass-lumped, giving per-node
    level functions scaled by tau*D_ii (semilinear) or D_ii with offset
    -D_ii*w^k_i (quasilinear).
    """
    ctx = ctx or make_context(prob)
    if state.k >= prob.K_steps:
        raise ValueError(f"state is already at the final step {state.k}")
    tau = prob.tau
    t_mid = (state.k + 0.5) * tau
    t_next = (state.k + 1) * tau
    n = ctx.coords.shape[0]
    fbar = (np.zeros(n) if prob.source is None
            else np.broadcast_to(np.asarray(prob.source(ctx.coords, t_mid), dtype=float), (n,)))
    rhs_full = ctx.M @ (tau * fbar + state.u)

    free = ctx.free
    hy = prob.hysteresis
    if prob.kind == "semilinear":
        scale = tau * ctx.D[free]
        offset = None
    else:
        scale = ctx.D[free]
        offset = -ctx.D[free] * state.w[free]
    if isinstance(hy, PlayHysteresis):
        F = PlayNodewise(hy.params, state.memory[free], scale, offset)
    else:
        F = PreisachNodewise(hy.params, state.memory[free], scale, offset)

    g_c = ctx.boundary_values(prob, t_next)
    rhs_free = rhs_full[free] - ctx.A_fc @ g_c
    return ModelProblem(ctx.A_ff, rhs_free, F)


def advance(state: TransientState, prob: TransientProblem, solver,
            ctx: StepContext | None = None) -> tuple[TransientState, SolveReport]:
    """One backward-Euler step: solve, write boundary data, update memories."""
    ctx = ctx or make_context(prob)
    mp = build_step_system(state, prob, ctx)
    x0 = state.u[ctx.free]
    try:
        x, report = solver.solve(mp, x0)
    except NonConvergence as err:
        err.report.message += f" (time step {state.k} -> {state.k + 1})"
        raise
    t_next = (state.k + 1) * prob.tau
    u_new = np.empty_like(state.u)
    u_new[ctx.free] = x
    u_new[ctx.cons] = ctx.boundary_values(prob, t_next)
    hy = prob.hysteresis
    if isinstance(hy, PlayHysteresis):
        memory = play_clamp(state.memory, u_new, hy.params)
    else:
        memory = unit_play_clamp(state.memory, u_new[:, None], hy.params.r_nodes)
    new_state = TransientState(state.k + 1, u_new, memory, _hysteresis_output(prob, memory))
    return new_state, report


@dataclass
class Trajectory:
    final: TransientState
    snapshots: dict[int, TransientState]
    reports: list[SolveReport]


def run_transient(prob: TransientProblem, solver,
                  snapshot_steps: Sequence[int] = ()) -> Trajectory:
    """Run all K_steps advances, keeping requested snapshots and reports."""
    ctx = make_context(prob)
    state = init_state(prob, ctx)
    wanted = set(int(s) for s in snapshot_steps)
    snaps = {0: state} if 0 in wanted else {}
    reports = []
    for _ in range(prob.K_steps):
        state, rep = advance(state, prob, solver, ctx)
        reports.append(rep)
        if state.k in wanted:
            snaps[state.k] = state
    return Trajectory(state, snaps, reports)


def snapshot_csv(state: TransientState, mesh: Mesh) -> str:
    """CSV dump of one snapshot: node id, coordinates, solution, output."""
    axes = "xyz"[: mesh.dim]
    buf = io.StringIO()
    buf.write("node," + ",".join(axes) + ",u,w\n")
    for i in range(mesh.n_vertices):
        coords = ",".join(f"{c:.12g}" for c in mesh.vertices[i])
        buf.write(f"{i},{coords},{state.u[i]:.12e},{state.w[i]:.12e}\n")
    return buf.getvalue()
