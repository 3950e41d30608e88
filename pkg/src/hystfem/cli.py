"""Command-line front end: studies, benchmark, demo, mesh info."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import ConfigError, load_config, output_dir
from .fem import build_uniform_mesh
from .solver import NonConvergence, SmoothingNewtonSolver
from .stepping import run_transient, snapshot_csv


def _add_config_arg(p):
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--out", default=None, help="output directory (overrides config)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hystfem",
        description="parabolic PDEs with hysteresis: studies, solver benchmark, Preisach demo",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-info", help="print mesh sizes for a uniform grid")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, required=True)

    for name, help_text in (
        ("run-case", "run one transient case and dump snapshots"),
        ("study-h", "spatial convergence study"),
        ("study-tau", "temporal convergence study"),
        ("bench-solvers", "matched-step solver comparison"),
        ("preisach-demo", "scalar Preisach loop benchmark"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_arg(p)
    return parser


def _cmd_mesh_info(args) -> int:
    mesh = build_uniform_mesh(args.dim, args.n)
    print(f"dim {mesh.dim}, n {mesh.n_per_side}: "
          f"{mesh.n_vertices} vertices / {mesh.n_elements} elements, "
          f"{len(mesh.boundary_nodes)} boundary nodes")
    return 0


def _cmd_run_case(cfg: dict, out) -> int:
    study = harness.study_from_config(cfg, out)
    run = cfg.get("run", {})
    n = int(run.get("n", study.case.n_init))
    k = int(run.get("k_steps", study.case.k_init))
    steps = [int(s) for s in run.get("snapshot_steps", [k])]
    prob = harness.case_problem(study.case, n, k)
    traj = run_transient(prob, SmoothingNewtonSolver(study.newton), snapshot_steps=steps)
    snaps = dict(traj.snapshots)
    snaps.setdefault(traj.final.k, traj.final)
    for step, state in sorted(snaps.items()):
        path = study.out_dir / f"{study.label}_snapshot_{step:06d}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(snapshot_csv(state, prob.mesh))
        print(f"wrote {path}")
    if prob.mesh.dim == 1:
        from . import plots
        plots.save_profile_plot(
            study.out_dir / f"{study.label}_final.svg",
            prob.mesh.vertices[:, 0], traj.final.u, traj.final.w,
            title=f"{study.label} at t = {prob.T}",
        )
    return 0


def _print_table(table: harness.ErrorTable):
    sys.stdout.write(table.to_csv())


def _cmd_study(cfg: dict, out, which: str) -> int:
    study = harness.study_from_config(cfg, out)
    table = harness.run_h_study(study) if which == "h" else harness.run_tau_study(study)
    _print_table(table)
    print(f"outputs in {study.out_dir}")
    return 0


def _cmd_bench(cfg: dict, out) -> int:
    bench = harness.bench_from_config(cfg, out)
    result = harness.bench_solvers(bench)
    for name, rep in result.reports.items():
        status = "ok" if rep.converged else "DNF"
        print(f"{name:18s} {status:3s} nonlinear {rep.nonlinear_iterations:4d} "
              f"linear {rep.linear_iterations:6d} func {rep.function_evaluations:4d} "
              f"jac {rep.jacobian_evaluations:3d} wall {rep.wall_time:8.2f}s")
    print(f"worst pairwise relative agreement: {result.agreement:.3e}")
    print(f"outputs in {bench.out_dir}")
    return 0


def _cmd_demo(cfg: dict, out) -> int:
    demo = harness.demo_from_config(cfg, out)
    res = harness.preisach_demo(demo)
    print(f"loop height          {res.loop_height:.6f}")
    print(f"closure gap (rel)    {res.closure_gap_rel:.3e}")
    print(f"first-period transient gap (rel) {res.first_period_gap_rel:.3e}")
    print(f"odd-symmetry defect (rel)        {res.symmetry_rel:.3e}")
    print(f"outputs in {demo.out_dir}")
    return 0


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "mesh-info":
            return _cmd_mesh_info(args)
        cfg = load_config(args.config)
        out = output_dir(cfg, args.out)
        if args.command == "run-case":
            return _cmd_run_case(cfg, out)
        if args.command == "study-h":
            return _cmd_study(cfg, out, "h")
        if args.command == "study-tau":
            return _cmd_study(cfg, out, "tau")
        if args.command == "bench-solvers":
            return _cmd_bench(cfg, out)
        if args.command == "preisach-demo":
            return _cmd_demo(cfg, out)
        raise AssertionError(args.command)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NonConvergence as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
