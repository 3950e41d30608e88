"""Experiment drivers: convergence studies, solver benchmark, Preisach demo.

Study outputs are deterministic CSV files (fixed float formatting) plus SVG
figures rendering the same data.  Reference trajectories are cached on disk
keyed by a hash of everything that influences them, so h- and tau-studies of
the same case share one reference run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import plots
from .config import stable_hash
from .fem import FeFunction, build_uniform_mesh, error_norms
from .hysteresis import PlayParams, lorentzian_preisach_params, unit_play_clamp
from .solver import (
    DualIterationSolver,
    FixedPointSolver,
    NewtonConfig,
    NonConvergence,
    SmoothingNewtonSolver,
    SolveReport,
)
from .stepping import (
    PlayHysteresis,
    PreisachHysteresis,
    TransientProblem,
    advance,
    build_step_system,
    init_state,
    make_context,
    run_transient,
)


def ramp_wave(t):
    """Boundary drive of the convergence cases: 2 t sin(2 pi t)."""
    return 2.0 * t * np.sin(2.0 * np.pi * t)


def cubic_bump(x):
    """x (1/2 - x) (1 - x); vanishes at 0, 1/2, 1."""
    return x * (0.5 - x) * (1.0 - x)


#: desk-scale defaults per builtin case; the full-scale grids stay reachable
#: by overriding n_ref/k_ref/k_init in the config (cases 1-2:
#: 32768/262144/256, cases 3-4: n_ref=640, cases 5-6: n_ref=100)
BUILTIN_CASES = {
    1: dict(kind="semilinear", dim=1, T=4.9, n_ref=1024, k_ref=8192,
            n_init=32, k_init=64, levels_h=3, levels_tau=3),
    2: dict(kind="quasilinear", dim=1, T=5.0, n_ref=1024, k_ref=8192,
            n_init=32, k_init=64, levels_h=3, levels_tau=3),
    3: dict(kind="semilinear", dim=2, T=0.5, n_ref=160, k_ref=5120,
            n_init=10, k_init=10, levels_h=1, levels_tau=1),
    4: dict(kind="quasilinear", dim=2, T=3.0, n_ref=160, k_ref=7680,
            n_init=10, k_init=40, levels_h=1, levels_tau=1),
    5: dict(kind="semilinear", dim=3, T=1.0, n_ref=20, k_ref=200,
            n_init=5, k_init=10, levels_h=1, levels_tau=1),
    6: dict(kind="quasilinear", dim=3, T=3.0, n_ref=20, k_ref=180,
            n_init=5, k_init=10, levels_h=1, levels_tau=1),
}


@dataclass
class CaseSpec:
    """One convergence-study case: problem plus refinement protocol."""

    case_id: int
    kind: str
    dim: int
    T: float
    n_ref: int
    k_ref: int
    n_init: int
    k_init: int
    levels_h: int
    levels_tau: int
    play: PlayParams = field(default_factory=lambda: PlayParams(-0.5, 0.5, 2.0))

    def validate(self):
        ratio = self.n_ref / self.n_init
        k = round(math.log2(ratio)) if ratio >= 1 else -1
        if k < 0 or self.n_init * 2**k != self.n_ref:
            raise ValueError("n_ref must be a power-of-two multiple of n_init")
        for r in range(self.levels_tau + 1):
            if self.k_ref % (self.k_init * 2**r):
                raise ValueError("k_ref must be a multiple of every refined k")
        if self.n_init * 2**self.levels_h > self.n_ref:
            raise ValueError("finest h level exceeds the reference mesh")

    def key(self) -> dict:
        p = self.play
        return dict(case=self.case_id, kind=self.kind, dim=self.dim, T=self.T,
                    play=[p.a, p.b, p.c])


def case_spec(case_id: int, **overrides) -> CaseSpec:
    if case_id not in BUILTIN_CASES:
        raise ValueError(f"unknown case id {case_id}; have {sorted(BUILTIN_CASES)}")
    base = dict(BUILTIN_CASES[case_id])
    base.update(overrides)
    spec = CaseSpec(case_id=case_id, **base)
    spec.validate()
    return spec


def case_problem(spec: CaseSpec, n: int, k_steps: int) -> TransientProblem:
    """Instantiate a builtin case on an n-cells-per-side mesh with k steps."""
    mesh = build_uniform_mesh(spec.dim, n)
    if spec.dim == 1:
        boundary = lambda c, t: np.full(c.shape[0], ramp_wave(t))
        initial = None
    else:
        boundary = lambda c, t: (c[:, 0] - 0.5) * ramp_wave(t)
        amp = 10.0 ** (spec.dim + 1)
        initial = lambda c: amp * np.prod(cubic_bump(c), axis=1)
    return TransientProblem(
        spec.kind, mesh, spec.T, k_steps, PlayHysteresis(spec.play, 0.0),
        boundary=boundary, initial=initial,
    )


@dataclass
class StudyConfig:
    case: CaseSpec
    out_dir: Path
    newton: NewtonConfig = field(default_factory=lambda: NewtonConfig(tol=1e-11))
    label: str = ""

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.label:
            self.label = f"case{self.case.case_id}"


@dataclass
class ErrorTable:
    """Per-level errors with dyadic orders log2(e_prev / e_this)."""

    levels: list
    l2: list
    h1: list

    @staticmethod
    def order(prev: float, this: float) -> float:
        if prev > 0 and this > 0:
            return math.log2(prev / this)
        return math.nan

    def orders(self) -> tuple[list, list]:
        o2 = [math.nan] + [self.order(a, b) for a, b in zip(self.l2, self.l2[1:])]
        o1 = [math.nan] + [self.order(a, b) for a, b in zip(self.h1, self.h1[1:])]
        return o2, o1

    def to_csv(self) -> str:
        o2, o1 = self.orders()
        lines = ["level,l2_error,l2_order,h1_error,h1_order"]
        for i, lev in enumerate(self.levels):
            f2 = "-" if math.isnan(o2[i]) else f"{o2[i]:.2f}"
            f1 = "-" if math.isnan(o1[i]) else f"{o1[i]:.2f}"
            lines.append(f"{lev},{self.l2[i]:.12e},{f2},{self.h1[i]:.12e},{f1}")
        return "\n".join(lines) + "\n"


def _final_solution(spec: CaseSpec, n: int, k_steps: int,
                    newton: NewtonConfig) -> FeFunction:
    prob = case_problem(spec, n, k_steps)
    ctx = make_context(prob)
    solver = SmoothingNewtonSolver(newton, linear=ctx.linear)
    state = init_state(prob, ctx)
    for _ in range(k_steps):
        state, _ = advance(state, prob, solver, ctx)
    return FeFunction(prob.mesh, state.u)


def reference_solution(cfg: StudyConfig) -> FeFunction:
    """Final-time reference at (n_ref, k_ref), cached under out_dir/cache."""
    spec = cfg.case
    key = stable_hash({**spec.key(), "n": spec.n_ref, "k": spec.k_ref,
                       "tol": cfg.newton.tol})
    cache = cfg.out_dir / "cache" / f"ref_{key}.npz"
    if cache.is_file():
        data = np.load(cache)
        mesh = build_uniform_mesh(spec.dim, spec.n_ref)
        return FeFunction(mesh, data["u"])
    ref = _final_solution(spec, spec.n_ref, spec.k_ref, cfg.newton)
    cache.parent.mkdir(parents=True, exist_ok=True)
    np.savez(cache, u=ref.values)
    return ref


def run_h_study(cfg: StudyConfig) -> ErrorTable:
    """Refine h at fixed tau = T/k_ref; errors at t = T against the reference."""
    spec = cfg.case
    ref = reference_solution(cfg)
    levels, l2s, h1s = [], [], []
    for r in range(spec.levels_h + 1):
        n = spec.n_init * 2**r
        u = _final_solution(spec, n, spec.k_ref, cfg.newton)
        l2, h1 = error_norms(ref, u)
        levels.append(r)
        l2s.append(l2)
        h1s.append(h1)
    table = ErrorTable(levels, l2s, h1s)
    _emit_table(cfg, table, "h")
    return table


def run_tau_study(cfg: StudyConfig) -> ErrorTable:
    """Refine tau at fixed h = 1/n_ref; errors at t = T against the reference."""
    spec = cfg.case
    ref = reference_solution(cfg)
    levels, l2s, h1s = [], [], []
    for r in range(spec.levels_tau + 1):
        k = spec.k_init * 2**r
        u = _final_solution(spec, spec.n_ref, k, cfg.newton)
        l2, h1 = error_norms(ref, u)
        levels.append(r)
        l2s.append(l2)
        h1s.append(h1)
    table = ErrorTable(levels, l2s, h1s)
    _emit_table(cfg, table, "tau")
    return table


def _emit_table(cfg: StudyConfig, table: ErrorTable, tag: str):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out_dir / f"{cfg.label}_{tag}.csv"
    csv_path.write_text(table.to_csv())
    plots.save_error_plot(
        cfg.out_dir / f"{cfg.label}_{tag}.svg",
        table.levels, {"L2": table.l2, "H1": table.h1},
        xlabel=f"{tag} refinement level",
        title=f"{cfg.label}: error vs {tag} level",
    )


# --------------------------------------------------------------------------
# solver benchmark (3D quasilinear Preisach problem)
# --------------------------------------------------------------------------

@dataclass
class BenchConfig:
    out_dir: Path
    n: int = 20
    k_steps: int = 64
    T: float = 1.0
    step: int = 35
    tol: float = 1e-11
    amplitude: float = 2000.0
    solvers: tuple = ("smoothing_newton", "fixed_point", "dual_iteration")
    fp_beta: float = 0.0
    dual_beta: float = 0.0
    dual_lambda: float = 1.0
    full_transient: bool = False
    n_r: int = 60
    r_max: float = 500.0
    newton: NewtonConfig = field(default_factory=lambda: NewtonConfig(mu=100.0))
    max_iter: int = 2000

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not 1 <= self.step <= self.k_steps:
            raise ValueError("matched step must lie within the transient")


def bench_problem(cfg: BenchConfig) -> TransientProblem:
    pp = lorentzian_preisach_params(n_r=cfg.n_r, r_max=cfg.r_max,
                                    sigma_max=5.0 * cfg.r_max)
    mesh = build_uniform_mesh(3, cfg.n)
    amp = cfg.amplitude
    return TransientProblem(
        "quasilinear", mesh, cfg.T, cfg.k_steps, PreisachHysteresis(pp),
        source=lambda c, t: np.full(c.shape[0], amp * np.sin(3.0 * np.pi * t)),
    )


@dataclass
class BenchResult:
    reports: dict
    solutions: dict
    agreement: float        # worst pairwise relative solution distance
    full_outer: dict        # solver -> total outer iterations (if run)


def bench_solvers(cfg: BenchConfig) -> BenchResult:
    """Matched-step comparison of all solvers, plus optional full transient.

    Every solver starts from the converged step-(step-1) state produced by
    the smoothing Newton driver, with the shared CG tolerance; solvers that
    fail get a DNF row rather than aborting the benchmark.
    """
    prob = bench_problem(cfg)
    ctx = make_context(prob)
    ncfg = replace(cfg.newton, tol=cfg.tol)
    drivers = {
        "smoothing_newton": SmoothingNewtonSolver(ncfg, linear=ctx.linear),
        "fixed_point": FixedPointSolver(cfg.fp_beta, cfg.tol, cfg.max_iter,
                                        linear=ctx.linear),
        "dual_iteration": DualIterationSolver(cfg.dual_beta, cfg.dual_lambda,
                                              cfg.tol, cfg.max_iter, linear=ctx.linear),
    }
    state = init_state(prob, ctx)
    for _ in range(cfg.step - 1):
        state, _ = advance(state, prob, drivers["smoothing_newton"], ctx)
    mp = build_step_system(state, prob, ctx)
    x0 = state.u[ctx.free]

    reports, solutions = {}, {}
    for name in cfg.solvers:
        try:
            x, rep = drivers[name].solve(mp, x0)
            solutions[name] = x
        except NonConvergence as err:
            rep = err.report
        reports[name] = rep

    agreement = 0.0
    names = [n for n in cfg.solvers if n in solutions]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = float(np.linalg.norm(solutions[a] - solutions[b]))
            scale = max(1.0, float(np.linalg.norm(solutions[a])))
            agreement = max(agreement, d / scale)

    full_outer = {}
    if cfg.full_transient:
        for name in cfg.solvers:
            try:
                traj = run_transient(prob, drivers[name])
                full_outer[name] = sum(r.nonlinear_iterations for r in traj.reports)
            except NonConvergence:
                full_outer[name] = -1

    _emit_bench(cfg, reports, agreement, full_outer)
    return BenchResult(reports, solutions, agreement, full_outer)


def _emit_bench(cfg: BenchConfig, reports: dict, agreement: float, full_outer: dict):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = [SolveReport.CSV_HEADER]
    lines += [reports[name].csv_row() for name in reports]
    lines.append(f"# matched step {cfg.step}, worst relative agreement {agreement:.3e}")
    if full_outer:
        total = ",".join(f"{k}={v}" for k, v in full_outer.items())
        lines.append(f"# full transient outer iterations: {total}")
    (cfg.out_dir / "bench_solvers.csv").write_text("\n".join(lines) + "\n")
    plots.save_residual_plot(
        cfg.out_dir / "bench_residuals.svg",
        {name: rep.residual_history for name, rep in reports.items()},
        title=f"residual histories at step {cfg.step}",
    )


# --------------------------------------------------------------------------
# scalar Preisach loop benchmark
# --------------------------------------------------------------------------

@dataclass
class DemoConfig:
    out_dir: Path
    n_r: int = 100
    r_max: float = 500.0
    amplitude: float = 0.080422
    gamma: float = 0.27382
    mu: float = 91.24317
    periods: int = 2
    samples_per_period: int = 16384
    drive_peak: float = 308.672
    saturation: float = 2000.0

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.samples_per_period % 4:
            raise ValueError("samples_per_period must be divisible by 4")


def demo_excitation(t):
    return 170.0 * np.sin(4.0 * np.pi * t) + 170.0 * np.sin(20.0 * np.pi * t + np.pi)


@dataclass
class DemoResult:
    loop_height: float
    closure_gap_rel: float       # |w(2T) - w(T)| / height, peak-drive init
    first_period_gap_rel: float  # |w(T) - w(0)| / height (transient size)
    symmetry_rel: float          # odd-symmetry defect of the demagnetized run


def newton_from_dict(d: dict, **defaults) -> NewtonConfig:
    fields = ("rho", "alpha", "eta", "gamma", "sigma", "mu", "tol", "max_iter",
              "initial_width", "linesearch_cap", "eps_halving_cap")
    kw = dict(defaults)
    kw.update({k: d[k] for k in fields if k in d})
    return NewtonConfig(**kw)


def study_from_config(cfg: dict, out_dir) -> StudyConfig:
    case_d = dict(cfg.get("case", {}))
    case_id = case_d.pop("id", None)
    if case_id is None:
        raise ValueError("config needs [case] with an 'id' key")
    extra = {k: case_d[k] for k in case_d
             if k in ("kind", "dim", "T", "n_ref", "k_ref", "n_init", "k_init",
                      "levels_h", "levels_tau")}
    spec = case_spec(int(case_id), **extra)
    newton = newton_from_dict(cfg.get("newton", {}), tol=1e-11)
    return StudyConfig(spec, Path(out_dir), newton)


def bench_from_config(cfg: dict, out_dir) -> BenchConfig:
    b = dict(cfg.get("bench", {}))
    newton = newton_from_dict(cfg.get("newton", {}), mu=100.0)
    known = ("n", "k_steps", "T", "step", "tol", "amplitude", "solvers",
             "fp_beta", "dual_beta", "dual_lambda", "full_transient",
             "n_r", "r_max", "max_iter")
    kw = {k: b[k] for k in known if k in b}
    if "solvers" in kw:
        kw["solvers"] = tuple(kw["solvers"])
    return BenchConfig(out_dir=Path(out_dir), newton=newton, **kw)


def demo_from_config(cfg: dict, out_dir) -> DemoConfig:
    d = dict(cfg.get("demo", {}))
    known = ("n_r", "r_max", "amplitude", "gamma", "mu", "periods",
             "samples_per_period", "drive_peak", "saturation")
    kw = {k: d[k] for k in known if k in d}
    return DemoConfig(out_dir=Path(out_dir), **kw)


def preisach_demo(cfg: DemoConfig) -> DemoResult:
    """Drive the scalar Preisach model with the two-tone excitation.

    Two runs: one initialized by the negative-saturation sweep to the
    excitation peak and back to zero (the benchmark memory state), one from
    demagnetized memory for the odd-symmetry check.  Both write (t, u, w)
    CSV files; the loop figure comes from the first run.
    """
    pp = lorentzian_preisach_params(
        n_r=cfg.n_r, r_max=cfg.r_max, amplitude=cfg.amplitude, gamma=cfg.gamma,
        mu=cfg.mu, sigma_max=cfg.saturation + cfg.r_max + 100.0,
    )
    r, wt = pp.r_nodes, pp.r_weights
    n = cfg.samples_per_period
    times = (np.arange(cfg.periods * n) + 1) / n

    def run(w_start):
        w = w_start.copy()
        out = np.empty(times.size)
        for i, t in enumerate(times):
            w = unit_play_clamp(w, demo_excitation(t), r)
            out[i] = 2.0 * float(wt @ pp.omega_value(w))
        return out

    w_init = np.full_like(r, -cfg.saturation) - r
    for v in (cfg.drive_peak, 0.0):
        w_init = unit_play_clamp(w_init, v, r)
    w0_out = 2.0 * float(wt @ pp.omega_value(w_init))
    u = demo_excitation(times)
    w_loop = run(w_init)
    w_demag = run(np.zeros_like(r))

    height = float(w_loop.max() - w_loop.min())
    closure = abs(w_loop[2 * n - 1] - w_loop[n - 1]) / height if cfg.periods >= 2 else math.nan
    first_gap = abs(w_loop[n - 1] - w0_out) / height
    q = n // 4
    sym = float(np.abs(w_demag[n:2 * n - q] + w_demag[n + q:2 * n]).max()) / height \
        if cfg.periods >= 2 else math.nan

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for name, w in (("preisach_loop", w_loop), ("preisach_loop_demag", w_demag)):
        lines = ["t,u,w"]
        lines += [f"{t:.12e},{ui:.12e},{wi:.12e}" for t, ui, wi in zip(times, u, w)]
        (cfg.out_dir / f"{name}.csv").write_text("\n".join(lines) + "\n")
    plots.save_loop_plot(cfg.out_dir / "preisach_loop.svg", u, w_loop,
                         title="Preisach loop under the two-tone excitation")
    return DemoResult(height, closure, first_gap, sym)
