"""Command-line harness: fom, offline, rom, and table subcommands."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import fom, hyperreduction, io, pod, presets, rom, svg
from .physics import InadmissibleStateError

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _apply_thread_cap():
    threads = os.environ.get("ESDG_THREADS")
    if not threads:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def _out_dir(args, config) -> Path:
    out = Path(args.out) if args.out else Path("out") / config.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_problem(config):
    law, ops = presets.build_operators(config)
    u0 = presets.initial_state(config, law, ops)
    rule = presets.boundary_rule(config, law, ops)
    problem = fom.FomProblem(law, ops, epsilon=config.epsilon,
                             boundary_state=rule)
    return law, ops, u0, rule, problem


def cmd_fom(args) -> int:
    config = presets.load_config(args.config or args.preset)
    out = _out_dir(args, config)
    law, ops, u0, _, problem = _build_problem(config)
    start = time.perf_counter()
    result = fom.run_fom(problem, u0, config.t_final, rtol=config.rtol,
                         atol=config.atol, frames=config.frames)
    elapsed = time.perf_counter() - start
    io.write_trajectory(out / "fom", result.times, result.states, {
        "config": config.name,
        "steps_accepted": result.steps_accepted,
        "wall_time_s": elapsed,
    })
    rows = []
    for t, flat in zip(result.times, result.states):
        u = flat.reshape(law.n, ops.num_nodes)
        rows.append((t, fom.total_entropy(problem, u),
                     fom.entropy_residual(problem, u, t)))
    io.write_csv(out / "fom_entropy.csv",
                 ["time", "total_entropy", "convective_entropy_residual"],
                 rows)
    report = {"steps_accepted": result.steps_accepted,
              "wall_time_s": elapsed}
    exact = presets.analytic_state(config, law, ops, config.t_final)
    if exact is not None:
        u_final = result.states[-1].reshape(law.n, ops.num_nodes)
        report["error_vs_analytic"] = rom.relative_l2_error(
            exact, u_final, ops.mass)
    with open(out / "fom_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"fom: {config.name}: {result.steps_accepted} steps, "
          f"{elapsed:.2f}s -> {out}")
    return EXIT_OK


def cmd_offline(args) -> int:
    config = presets.load_config(args.config or args.preset)
    out = _out_dir(args, config)
    law, ops = presets.build_operators(config)
    modes = args.modes or config.modes
    enrich = config.enrich if args.enrich is None else args.enrich
    _, states, _ = io.read_trajectory(out / "fom")
    snapshots = pod.build_snapshots(states, law, enrich=enrich)
    basis, singular_values = pod.weighted_pod(snapshots, ops.mass, modes)
    io.write_matrix(out / "basis.mat", basis)
    io.write_csv(out / "singular_values.csv", ["index", "sigma", "energy_residual"],
                 list(zip(range(1, singular_values.size + 1), singular_values,
                          pod.energy_residual(singular_values))))
    if args.no_hyperreduction:
        quad = hyperreduction.ideal_quadrature(ops.mass)
    else:
        target = hyperreduction.build_target_space(basis, ops.mass)
        tol = presets.hyperreduction_tolerance(
            config, pod.energy_residual(singular_values)[modes - 1])
        quad = hyperreduction.empirical_cubature(target, ops.mass, tol=tol)
        test_bases = tuple(
            hyperreduction.build_test_basis(basis, ops.mass, q)
            for q in ops.Q)
        quad = hyperreduction.stabilize_quadrature(quad, test_bases,
                                                   target, ops.mass)
    io.write_matrix(out / "quad_index.mat", quad.index[None, :].astype(float))
    io.write_matrix(out / "quad_weights.mat", quad.weights[None, :])
    with open(out / "offline_report.json", "w") as fh:
        json.dump({"modes": modes, "enrich": enrich,
                   "hyperreduced": not args.no_hyperreduction,
                   "volume_nodes": int(quad.num_nodes),
                   "moment_residual": quad.residual}, fh, indent=1)
    svg.plot(out / "singular_values.svg",
             [svg.Series(np.arange(1, singular_values.size + 1),
                         np.maximum(singular_values, 1e-300),
                         label="singular values")],
             title=f"{config.name}: snapshot singular values",
             xlabel="index", ylabel="sigma", logy=True)
    print(f"offline: {config.name}: {modes} modes, "
          f"{quad.num_nodes} volume nodes -> {out}")
    return EXIT_OK


def load_rom_problem(config, out, *, es_viscosity=False):
    """Rebuild the reduced problem from persisted offline artifacts."""
    law, ops = presets.build_operators(config)
    rule = presets.boundary_rule(config, law, ops)
    basis = io.read_matrix(out / "basis.mat")
    index = io.read_matrix(out / "quad_index.mat").ravel().astype(int)
    weights = io.read_matrix(out / "quad_weights.mat").ravel()
    ideal = index.size == ops.num_nodes
    if ideal:
        hrops = None
    else:
        quad = hyperreduction.HyperReducedQuadrature(
            index=index, weights=weights, residual=float("nan"))
        hrops = hyperreduction.build_from_quadrature(ops, basis, quad)
    return rom.RomProblem(law, ops, basis, hrops=hrops,
                          epsilon=config.epsilon, boundary_state=rule,
                          es_viscosity=es_viscosity)


def cmd_rom(args) -> int:
    config = presets.load_config(args.config or args.preset)
    out = _out_dir(args, config)
    problem = load_rom_problem(config, out, es_viscosity=args.es_viscosity)
    law, ops = problem.law, problem.ops
    times, fom_states, fom_meta = io.read_trajectory(out / "fom")
    u0 = fom_states[0].reshape(law.n, ops.num_nodes)
    a0 = rom.project_state(problem, u0)
    start = time.perf_counter()
    result = rom.run_rom(problem, a0, config.t_final, rtol=config.rtol,
                         atol=config.atol, frames=config.frames)
    elapsed = time.perf_counter() - start
    io.write_trajectory(out / "rom", result.times, result.states, {
        "config": config.name,
        "modes": problem.num_modes,
        "steps_accepted": result.steps_accepted,
        "wall_time_s": elapsed,
    })
    rows = []
    for t, flat in zip(result.times, result.states):
        a = flat.reshape(law.n, problem.num_modes)
        rows.append((t, rom.rom_entropy_residual(problem, a, t),
                     rom.viscous_dissipation(problem, a)))
    io.write_csv(out / "rom_entropy.csv",
                 ["time", "convective_entropy_residual",
                  "viscous_dissipation"], rows)
    u_fom = fom_states[-1].reshape(law.n, ops.num_nodes)
    u_rom = rom.lift(problem, result.states[-1].reshape(law.n,
                                                        problem.num_modes))
    error = rom.relative_l2_error(u_fom, u_rom, ops.mass)
    report = {"modes": problem.num_modes, "error_vs_fom": error,
              "steps_accepted": result.steps_accepted,
              "fom_steps_accepted": fom_meta.get("steps_accepted"),
              "wall_time_s": elapsed,
              "fom_wall_time_s": fom_meta.get("wall_time_s"),
              "volume_nodes": (problem.hrops.quad.num_nodes
                               if problem.hrops else ops.num_nodes)}
    with open(out / "rom_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    if ops.dim == 1:
        order = np.argsort(ops.x[:, 0])
        series = [svg.Series(ops.x[order, 0], u_fom[0, order], label="FOM"),
                  svg.Series(ops.x[order, 0], u_rom[0, order], label="ROM",
                             line=False, marker=True)]
        svg.plot(out / "solution.svg", series,
                 title=f"{config.name}: final frame",
                 xlabel="x", ylabel="component 0")
    entropy_rows = np.asarray(rows)
    svg.plot(out / "rom_entropy.svg",
             [svg.Series(entropy_rows[:, 0],
                         np.maximum(np.abs(entropy_rows[:, 1]), 1e-18),
                         label="convective entropy")],
             title=f"{config.name}: ROM entropy residual",
             xlabel="time", ylabel="|residual|", logy=True)
    print(f"rom: {config.name}: N={problem.num_modes} "
          f"error={error:.3e} steps={result.steps_accepted} -> {out}")
    return EXIT_OK


_TABLES = {
    "table1": (["advection-p0", "advection-p3", "advection-p7"],
               [15, 20, 25]),
    "table2": (["burgers-p0", "burgers-p3", "burgers-p7"], [30, 40, 50]),
    "table3": (["euler1d-p0", "euler1d-p3", "euler1d-p7"], [20, 30, 40]),
}


def cmd_table(args) -> int:
    if args.table not in _TABLES:
        raise ValueError(f"unknown table {args.table!r}; "
                         f"expected one of {sorted(_TABLES)}")
    preset_names, mode_counts = _TABLES[args.table]
    out_root = Path(args.out) if args.out else Path("out")
    cells = {}
    fom_errors = {}
    for preset_name in preset_names:
        config = presets.load_config(preset_name)
        out = out_root / config.name
        out.mkdir(parents=True, exist_ok=True)
        run_args = argparse.Namespace(
            config=None, preset=preset_name, out=str(out), modes=None,
            enrich=None, no_hyperreduction=False, es_viscosity=False)
        cmd_fom(run_args)
        with open(out / "fom_report.json") as fh:
            fom_errors[preset_name] = json.load(fh).get("error_vs_analytic")
        for n in mode_counts:
            run_args.modes = n
            cmd_offline(run_args)
            cmd_rom(run_args)
            with open(out / "rom_report.json") as fh:
                report = json.load(fh)
            cells[(preset_name, n)] = (report["error_vs_fom"],
                                       report["volume_nodes"])
    header = ["error/nodes"] + preset_names
    rows = []
    if any(v is not None for v in fom_errors.values()):
        rows.append(["FOM"] + [
            f"{fom_errors[p]:.2e}" if fom_errors[p] is not None else ""
            for p in preset_names])
    for n in mode_counts:
        rows.append([f"N={n}"] + [
            f"{cells[(p, n)][0]:.2e}/ {cells[(p, n)][1]}"
            for p in preset_names])
    table_path = out_root / f"{args.table}.csv"
    io.write_csv(table_path, header, rows)
    print(f"table: wrote {table_path}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esdg",
        description="Entropy-stable DG full- and reduced-order models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a TOML config file")
        p.add_argument("--preset", help="name of a shipped preset")
        p.add_argument("--out", help="output directory")

    p_fom = sub.add_parser("fom", help="run the full-order model")
    common(p_fom)
    p_off = sub.add_parser("offline", help="build POD basis and quadrature")
    common(p_off)
    p_off.add_argument("--modes", type=int, help="number of POD modes")
    p_off.add_argument("--enrich", dest="enrich", action="store_true",
                       default=None, help="append entropy-variable snapshots")
    p_off.add_argument("--no-enrich", dest="enrich", action="store_false")
    p_off.add_argument("--no-hyperreduction", action="store_true",
                       help="keep the full quadrature")
    p_rom = sub.add_parser("rom", help="run the reduced-order model")
    common(p_rom)
    p_rom.add_argument("--es-viscosity", action="store_true",
                       help="use the entropy-stable viscosity variant")
    p_tab = sub.add_parser("table", help="reproduce a results table")
    p_tab.add_argument("table", choices=sorted(_TABLES))
    p_tab.add_argument("--out", help="output root directory")
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _parser().parse_args(argv)
    if args.command in ("fom", "offline", "rom") \
            and not (args.config or args.preset):
        print("error: one of --config or --preset is required",
              file=sys.stderr)
        return EXIT_CONFIG
    handlers = {"fom": cmd_fom, "offline": cmd_offline,
                "rom": cmd_rom, "table": cmd_table}
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, InadmissibleStateError,
            np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
