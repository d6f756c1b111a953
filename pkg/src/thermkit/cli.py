"""Command-line entry point.

Subcommands: gen, homogenize, mesh, solve, power, dataset, metrics,
validate. Exit codes: 0 success, 1 usage error, 2 domain error (geometry,
mesh, solver, format, metrics). `--json` switches stdout to a single
machine-readable JSON object; `--show-config` prints the resolved
configuration (flags > THERMKIT_* environment > defaults) and exits.

Every run is deterministic in its full argv: sampling is seed-driven, the
solver is deterministic, and all JSON artifacts are canonically ordered.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, dataset as ds, metrics as mt, validate as vd
from .emt import homogenize_layer, volume_fractions
from .errors import FormatError, ThermkitError
from .mesh import assemble, rasterize_power
from .solver import solve_steady, solve_transient
from .stack import PackageStack, PowerAssignment, load_stack, save_stack, \
    stack_total_power
from .tensorio import read_tensor, write_tensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception, not sys.exit(2)."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _env(name: str, default, cast):
    raw = os.environ.get(f"THERMKIT_{name}")
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise _UsageError(
            f"environment variable THERMKIT_{name}={raw!r} is not a valid "
            f"{cast.__name__}"
        )


def _load_stack_arg(value: str) -> PackageStack:
    """Accept a built-in case name or a stack JSON path."""
    if value in bench.CASE_NAMES:
        return bench.make_case(value)
    path = Path(value)
    if path.exists():
        return load_stack(path)
    raise FormatError(
        f"{value!r} is neither a built-in case ({', '.join(bench.CASE_NAMES)}) "
        f"nor an existing stack file"
    )


def _emit(payload: dict, args, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif human is not None:
        print(human)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    stack = bench.make_case(args.case)
    save_stack(stack, args.out, unit=args.unit)
    _emit({"case": args.case, "out": str(args.out),
           "layers": len(stack.layers), "cores": len(stack.core_ids())},
          args, f"wrote {args.case} ({len(stack.core_ids())} cores) "
          f"to {args.out}")
    return EXIT_OK


def _cmd_homogenize(args) -> int:
    stack = _load_stack_arg(args.stack)
    rows = []
    for layer in stack.layers:
        if args.layer and layer.name != args.layer:
            continue
        if layer.array is None:
            continue
        eq = homogenize_layer(layer)
        f = volume_fractions(layer.array)
        rows.append({
            "layer": layer.name,
            "f_core": f.f_core, "f_shell": f.f_shell,
            "f_matrix": f.f_matrix, "f_inclusion": f.f_inclusion,
            "k_x_w_per_m_k": eq.k_x, "k_y_w_per_m_k": eq.k_y,
            "k_z_w_per_m_k": eq.k_z, "c_v_j_per_m3_k": eq.c_v,
        })
    if args.layer and not rows:
        raise FormatError(
            f"layer {args.layer!r} not found or has no interconnect array"
        )
    payload = {"stack": stack.name, "layers": rows}
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    lines = [f"{stack.name}: {len(rows)} homogenized layer(s)"]
    for r in rows:
        lines.append(
            f"  {r['layer']}: f_inc={r['f_inclusion']:.4f} "
            f"k_xy={r['k_x_w_per_m_k']:.3f} k_z={r['k_z_w_per_m_k']:.3f} "
            f"c_v={r['c_v_j_per_m3_k']:.4g}"
        )
    _emit(payload, args, "\n".join(lines))
    return EXIT_OK


def _cmd_mesh(args) -> int:
    stack = _load_stack_arg(args.stack)
    profile = bench.desk_profile(stack)
    if args.cells_per_mm is not None:
        profile = bench.MeshProfile(
            hf_cells_per_mm=args.cells_per_mm,
            lf_cells_per_mm=args.cells_per_mm,
        )
    grid = bench.build_mesh(stack, args.fidelity, profile)
    stats = grid.stats()
    lines = [f"{stack.name} [{args.fidelity}] "
             f"{stats['nx']}x{stats['ny']}x{stats['nz']} "
             f"dx={stats['dx_mm']:.4g} mm "
             f"active={stats['cells_active']}"]
    for name, info in stats["layers"].items():
        lines.append(f"  {name}: {info['z_slabs']} slab(s), "
                     f"{info['active_cells']} cells")
    _emit(stats, args, "\n".join(lines))
    return EXIT_OK


def _parse_power_spec(spec: str, stack: PackageStack) -> PowerAssignment:
    if spec.startswith("random:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise _UsageError(f"--power random:<seed> needs an integer seed, "
                              f"got {spec!r}")
        return bench.sample_power(stack, seed)
    if spec.startswith("uniform:"):
        try:
            watts = float(spec.split(":", 1)[1])
        except ValueError:
            raise _UsageError(f"--power uniform:<watts> needs a number, "
                              f"got {spec!r}")
        return PowerAssignment(
            powers={c: watts for c in stack.core_ids()}, seed=0)
    path = Path(spec)
    if not path.exists():
        raise FormatError(
            f"--power must be random:<seed>, uniform:<watts>, or a JSON "
            f"file of per-core watts; {spec!r} is none of these"
        )
    powers = json.loads(path.read_text())
    if not isinstance(powers, dict):
        raise FormatError(f"{path} must hold a JSON object of core -> watts")
    return PowerAssignment(
        powers={str(k): float(v) for k, v in powers.items()}, seed=0)


def _cmd_solve(args) -> int:
    stack = _load_stack_arg(args.stack)
    grid = bench.build_mesh(stack, args.fidelity)
    system = assemble(grid)
    out = Path(args.out)

    if args.transient:
        if args.power is not None:
            waveform = _parse_power_spec(args.power, stack)  # constant draw
        else:
            waveform = bench.sample_waveform(stack, args.seed, args.segments,
                                             args.t_end)
        store = [args.t_end * (k + 1) / args.frames
                 for k in range(args.frames)]
        result, report = solve_transient(
            system, waveform, t_end=args.t_end, dt=args.dt, tol=args.tol,
            store_times=store)
        frames = np.stack([f.to_dense() for f in result.frames])
        write_tensor(out, frames)
        times_path = out.with_suffix(".times.tfm")
        write_tensor(times_path, np.asarray(result.times))
        human = (f"wrote {len(result.frames)} frames "
                 f"({grid.n_cells} cells) to {out}")
        extra = {"times_file": str(times_path),
                 "frames": len(result.frames)}
    else:
        spec = args.power if args.power is not None else f"random:{args.seed}"
        assignment = _parse_power_spec(spec, stack)
        q_rows = system.gather_q(rasterize_power(grid, stack, assignment))
        field, report = solve_steady(system, q_rows, tol=args.tol)
        write_tensor(out, field.to_dense())
        peak = float(np.max(field.values))
        human = (f"wrote steady field ({grid.n_cells} cells, "
                 f"peak {peak:.3f} K, "
                 f"P={stack_total_power(stack, assignment):.4g} W) to {out}")
        extra = {"peak_k": peak}

    payload = {"stack": stack.name, "fidelity": args.fidelity,
               "out": str(out), "cells": grid.n_cells, **extra}
    if args.report:
        payload["report"] = asdict(report)
        human += (f"\n  iterations={report.iterations} "
                  f"residual={report.residual:.2e} "
                  f"defect={report.energy_defect_w:.2e} W "
                  f"wall={report.wall_time_s:.2f} s")
    _emit(payload, args, human)
    return EXIT_OK


def _cmd_power(args) -> int:
    stack = _load_stack_arg(args.case)
    if args.segments:
        waveform = bench.sample_waveform(stack, args.seed, args.segments,
                                         args.t_end)
        segs = [{"t_start_s": t,
                 "powers_w": dict(sorted(a.powers.items())),
                 "total_w": stack_total_power(stack, a)}
                for t, a in waveform.segments]
        payload = {"case": stack.name, "seed": args.seed,
                   "t_end_s": args.t_end, "segments": segs}
        lines = [f"{stack.name} seed={args.seed}: "
                 f"{len(segs)} segment(s) over {args.t_end} s"]
        for s in segs:
            lines.append(f"  t>={s['t_start_s']:.4g} s: "
                         f"total {s['total_w']:.4g} W")
        _emit(payload, args, "\n".join(lines))
    else:
        assignment = bench.sample_power(stack, args.seed)
        payload = {"case": stack.name, "seed": args.seed,
                   "powers_w": dict(sorted(assignment.powers.items())),
                   "total_w": stack_total_power(stack, assignment)}
        lines = [f"{stack.name} seed={args.seed}: "
                 f"total {payload['total_w']:.4g} W"]
        for cid, p in sorted(assignment.powers.items()):
            lines.append(f"  {cid}: {p:.6g} W")
        _emit(payload, args, "\n".join(lines))
    return EXIT_OK


def _cmd_dataset(args) -> int:
    stack = _load_stack_arg(args.case)
    export = ds.ExportSpec.for_stack(stack, height=args.height,
                                     width=args.width)
    profile = None
    if args.hf_cells_per_mm is not None or args.lf_cells_per_mm is not None:
        default = bench.desk_profile(stack)
        profile = bench.MeshProfile(
            hf_cells_per_mm=args.hf_cells_per_mm or default.hf_cells_per_mm,
            lf_cells_per_mm=args.lf_cells_per_mm or default.lf_cells_per_mm,
        )
    transient = None
    if args.mode == "transient":
        transient = ds.TransientSpec.default(
            t_end=args.t_end, n_frames=args.frames,
            n_segments=args.segments)
        if args.dt is not None:
            transient = ds.TransientSpec(
                t_end=transient.t_end, dt=args.dt,
                n_segments=transient.n_segments,
                frame_times=transient.frame_times)
    manifest = ds.generate(
        stack, args.out, mode=args.mode, n_train_hf=args.n_high,
        n_train_lf=args.n_low, n_val=args.n_val, n_test=args.n_test,
        base_seed=args.seed, profile=profile, export=export,
        transient=transient, tol=args.tol, use_cache=not args.no_cache)
    counts = manifest["counts"]
    human = (f"dataset {stack.name} [{args.mode}] at {args.out}: "
             f"train {counts['train']['high']}H+{counts['train']['low']}L, "
             f"val {counts['val']['high']}, test {counts['test']['high']}")
    _emit(manifest, args, human)
    return EXIT_OK


def _collect_fields(root: Path) -> dict[str, np.ndarray]:
    files = sorted(root.rglob("*.temp.tfm"))
    if not files:
        raise FormatError(f"no temperature tensors (*.temp.tfm) under {root}")
    return {str(p.relative_to(root)): read_tensor(p) for p in files}


def _cmd_metrics(args) -> int:
    pred = _collect_fields(Path(args.pred))
    truth = _collect_fields(Path(args.truth))
    if set(pred) != set(truth):
        only_p = sorted(set(pred) - set(truth))[:3]
        only_t = sorted(set(truth) - set(pred))[:3]
        raise FormatError(
            f"prediction/truth directories disagree on records "
            f"(only in pred: {only_p}, only in truth: {only_t})"
        )
    keys = sorted(truth)
    report = mt.evaluate([pred[k] for k in keys], [truth[k] for k in keys])
    payload = report.to_json()
    payload["records"] = keys
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    human = (f"{len(keys)} record(s): rmse={report.rmse:.4g} K  "
             f"mape={report.mape_pct:.4g}%  pape={report.pape_pct:.4g}%  "
             f"mean={report.mean_abs:.4g} K  max={report.max_abs:.4g} K")
    _emit(payload, args, human)
    return EXIT_OK


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_validate(args) -> int:
    if args.check == "step":
        result = vd.transient_step_check(
            p_step=args.p_step / args.n_cells, t_end=args.t_end, dt=args.dt,
            tol=args.tol)
        payload = result.to_json()
        human = (f"step check: max relative error "
                 f"{100 * result.max_rel_err:.3f}% "
                 f"(final rise {result.final_rise:.3f} K)")
        csv_rows = ([list(r) for r in
                     zip(result.times, result.t_hf, result.t_lf)],
                    ["time_s", "t_hf_k", "t_lf_k"])
    elif args.check == "sweep":
        points = vd.fraction_sweep(args.fractions, tol=args.tol,
                                   jobs=args.jobs)
        payload = {"points": [p.to_json() for p in points],
                   "monotone_beyond_10pct":
                       vd.sweep_errors_monotone(points)}
        lines = ["fraction sweep:"]
        for p in points:
            if p.note:
                lines.append(f"  f={p.fraction:.3f}: {p.note}")
            else:
                lines.append(f"  f={p.fraction:.3f}: "
                             f"{100 * p.max_rel_err:.3f}% "
                             f"({p.hf_cells} HF cells)")
        human = "\n".join(lines)
        csv_rows = ([[p.fraction, p.max_rel_err, p.hf_cells, p.lf_cells,
                      p.note] for p in points],
                    ["fraction", "max_rel_err", "hf_cells", "lf_cells",
                     "note"])
    else:  # cost
        report = vd.cost_comparison(args.case, seed=args.seed, tol=args.tol)
        payload = report.to_json()
        human = (f"cost [{report.case}]: elements {report.hf_cells} / "
                 f"{report.lf_cells} = {report.element_ratio:.1f}x, "
                 f"wall {report.hf_wall_s:.2f} s / {report.lf_wall_s:.4f} s "
                 f"= {report.speedup:.1f}x, steady error "
                 f"{100 * report.steady_rel_err:.3f}%")
        csv_rows = ([[report.case, report.hf_cells, report.lf_cells,
                      report.hf_wall_s, report.lf_wall_s,
                      report.steady_rel_err]],
                    ["case", "hf_cells", "lf_cells", "hf_wall_s",
                     "lf_wall_s", "steady_rel_err"])

    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.csv:
        rows, header = csv_rows
        _write_csv(args.csv, header, rows)
    _emit(payload, args, human)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_global_flags(parser: argparse.ArgumentParser,
                      root: bool = False) -> None:
    """Global flags, accepted both before and after the subcommand.

    Subparsers register them with SUPPRESS defaults so an omitted flag does
    not clobber a value already parsed at the root level.
    """
    omitted = argparse.SUPPRESS
    parser.add_argument("--json", action="store_true",
                        default=False if root else omitted,
                        help="machine-readable JSON on stdout")
    parser.add_argument("--seed", type=int,
                        default=None if root else omitted,
                        help="seed for commands that sample "
                             "(default THERMKIT_SEED or 0)")
    parser.add_argument("--jobs", type=int,
                        default=None if root else omitted,
                        help="worker processes for the fraction sweep "
                             "(default THERMKIT_JOBS or 1)")
    parser.add_argument("--show-config", action="store_true",
                        default=False if root else omitted,
                        help="print the resolved configuration and exit")


def _build_parser() -> _Parser:
    parser = _Parser(prog="thermkit",
                     description="Multi-fidelity thermal simulation toolkit "
                                 "for stacked die packages.")
    _add_global_flags(parser, root=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                parser_class=_Parser)

    p = sub.add_parser("gen",
                       help="write a built-in benchmark stack to JSON")
    p.add_argument("--case", required=True, choices=bench.CASE_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--unit", choices=("m", "mm"), default="mm")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("homogenize",
                       help="equivalent anisotropic properties per "
                            "interconnect layer")
    p.add_argument("--stack", required=True,
                   help="built-in case name or stack JSON path")
    p.add_argument("--layer", default=None)
    p.add_argument("--out", default=None, help="write the table as JSON")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_homogenize)

    p = sub.add_parser("mesh",
                       help="build a mesh and print element statistics")
    p.add_argument("--stack", required=True)
    p.add_argument("--fidelity", required=True, choices=("high", "low"))
    p.add_argument("--cells-per-mm", type=float, default=None)
    p.add_argument("--stats", action="store_true",
                   help="print element counts (default action)")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("solve",
                       help="steady or transient solve, field written as a "
                            "binary tensor")
    p.add_argument("--stack", required=True)
    p.add_argument("--fidelity", required=True, choices=("high", "low"))
    p.add_argument("--power", default=None,
                   help="random:<seed> | uniform:<watts> | JSON file of "
                        "per-core watts (default random:<--seed>; with "
                        "--transient the default is a sampled waveform)")
    p.add_argument("--out", default="field.tfm")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--report", action="store_true",
                   help="include the solve report")
    p.add_argument("--transient", action="store_true")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--segments", type=int, default=4,
                   help="waveform segments for --transient")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("power",
                       help="sample a per-core power draw or waveform")
    p.add_argument("--case", required=True)
    p.add_argument("--segments", type=int, default=0,
                   help="sample a waveform with this many segments")
    p.add_argument("--t-end", type=float, default=1.0)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("dataset",
                       help="generate a mixed-fidelity training dataset")
    p.add_argument("--case", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("steady", "transient"),
                   default="steady")
    p.add_argument("--n-high", type=int, default=30,
                   help="high-fidelity training samples")
    p.add_argument("--n-low", type=int, default=90,
                   help="low-fidelity training samples")
    p.add_argument("--n-val", type=int, default=10)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--hf-cells-per-mm", type=float, default=None,
                   help="override the case's high-fidelity in-plane "
                        "resolution")
    p.add_argument("--lf-cells-per-mm", type=float, default=None,
                   help="override the case's low-fidelity in-plane "
                        "resolution")
    p.add_argument("--no-cache", action="store_true",
                   help="skip the steady-basis disk cache")
    p.add_argument("--t-end", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--segments", type=int, default=4)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("metrics",
                       help="compare two directories of temperature tensors")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None, help="write the report as JSON")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("validate",
                       help="cross-fidelity validation checks")
    p.add_argument("check", choices=("step", "sweep", "cost"))
    p.add_argument("--case", default="ind8c",
                   help="stack for the cost check")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.add_argument("--csv", default=None, help="write a CSV for plotting")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--p-step", type=float, default=0.2,
                   help="total step power across the full via array (step "
                        "check solves one unit cell's share)")
    p.add_argument("--n-cells", type=int, default=100,
                   help="unit cells the step power is split across")
    p.add_argument("--t-end", type=float, default=1.5)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--fractions", type=float, nargs="+",
                   default=list(vd.DEFAULT_FRACTIONS))
    _add_global_flags(p)
    p.set_defaults(func=_cmd_validate)

    return parser


def _resolved_config(args) -> dict:
    return {
        "command": args.command,
        "json": args.json,
        "seed": args.seed,
        "jobs": args.jobs,
        "cache_dir": str(ds.default_cache_dir()),
        "env": {k: v for k, v in sorted(os.environ.items())
                if k.startswith("THERMKIT_")},
    }


def dispatch(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)

    # precedence: flags > environment > defaults
    try:
        if args.seed is None:
            args.seed = _env("SEED", 0, int)
        if args.jobs is None:
            args.jobs = _env("JOBS", 1, int)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("thermkit: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    if args.show_config:
        print(json.dumps(_resolved_config(args), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ThermkitError as exc:
        print(f"thermkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
