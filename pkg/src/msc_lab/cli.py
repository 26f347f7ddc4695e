"""Command-line front end: ``msc-lab <command> <scenario> [options]``.

Scenarios are built-in names (see ``msc-lab list``) or paths to JSON files.
Exit codes: 0 success, 1 a declared check failed, 2 validation error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checks import evaluate, needs_trajectory, run_and_check
from .graph import GraphError
from .protocols import ProtocolError
from .scaling import ScalingError
from .scenarios import ScenarioError, builtin, builtin_names, instantiate, load_scenario, parse_scenario, write_scenario
from .sim import SimulationError, _atomic_write, integrate, read_csv, write_csv
from .spectral import SpectralError, analyze

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3
VALIDATION_ERRORS = (ScenarioError, GraphError, ScalingError, ProtocolError, SpectralError, SimulationError)


def _threads() -> int:
    raw = os.environ.get("MSC_LAB_THREADS")
    cpus = os.cpu_count() or 1
    if not raw:
        return cpus
    try:
        return max(1, min(int(raw), cpus))
    except ValueError:
        raise ScenarioError([f"MSC_LAB_THREADS: expected an integer, got {raw!r}"]) from None


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, lambda fh: fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"))


def _instance(args, **kw):
    scen = load_scenario(args.scenario, validate=False)
    return instantiate(scen, seed=args.seed, h=args.h, T=args.T, **kw)


# -- commands ---------------------------------------------------------------------------


def cmd_list(args) -> int:
    for name in builtin_names():
        print(f"{name:24s} {builtin(name).description}")
    return EXIT_OK


def cmd_export(args) -> int:
    out = Path(args.out)
    names = builtin_names() if args.scenario == "all" else [args.scenario]
    for name in names:
        path = write_scenario(load_scenario(name), out / f"{name}.json")
        print(path)
    return EXIT_OK


def cmd_spectral(args) -> int:
    inst = _instance(args, require_connected=False, build_protocol=False)
    spec = inst.scenario.protocol
    A = np.asarray(spec["A"], dtype=float) if "A" in spec else None
    c = spec.get("c")
    c = float(c) if isinstance(c, (int, float)) else None
    report = analyze(inst.graph, inst.scalings, A=A, c=c)
    data = {"scenario": inst.scenario.name, **report.to_dict()}
    path = Path(args.out) / f"{inst.scenario.name}.spectral.json"
    _write_json(path, data)
    ev = report.eigenvalues
    print(f"scenario {inst.scenario.name}: n={report.n} d={report.d} kernel dim={report.kernel_dim}")
    print("eigenvalues: " + ", ".join(
        f"{z.real:.4f}" if abs(z.imag) < 1e-9 else f"{z.real:.4f}{z.imag:+.4f}i" for z in ev))
    if report.interlacing is not None:
        il = report.interlacing
        print(f"interval [{il.lower:.4g}, {il.upper:.4g}] contains nonzero spectrum: {il.contained}")
    if report.gain is not None:
        print(f"coupling gain c={report.gain.c:.6g} (bound {report.gain.bound:.6g}), Theta_c Hurwitz: "
              f"{report.gain.hurwitz}")
    for k, v in report.checks.items():
        print(f"  {'PASS' if v else 'FAIL'} {k}")
    for note in report.notes:
        print(f"  note: {note}")
    print(f"wrote {path}")
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_simulate(args) -> int:
    inst = _instance(args)
    cfg = inst.config
    if args.stride is not None:
        from dataclasses import replace

        cfg = replace(cfg, stride=args.stride)
    traj = integrate(inst.protocol, inst.y0, cfg)
    name = inst.scenario.outputs.get("csv", f"{inst.scenario.name}.csv")
    path = Path(args.out) / name
    write_csv(traj, path, {"scenario": inst.scenario.name, "seed": inst.materialized["seed"],
                           "materialized": inst.materialized})
    status = f"diverged at t={traj.divergence_time:g}" if traj.diverged else f"reached t={traj.times[-1]:g}"
    print(f"{inst.scenario.name}: {len(traj.times)} samples, {status}; wrote {path}")
    return EXIT_OK


def cmd_check(args) -> int:
    inst = _instance(args)
    traj, report = run_and_check(inst)
    report.info["materialized"] = inst.materialized
    path = Path(args.out) / f"{inst.scenario.name}.report.json"
    _write_json(path, report.to_dict())
    print(report.format())
    return EXIT_OK if report.passed else EXIT_CHECK


def _sweep_one(data: dict, seed: int, h, T) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        inst = instantiate(parse_scenario(data, validate=False), seed=seed, h=h, T=T)
        traj = integrate(inst.protocol, inst.y0, inst.config) if needs_trajectory(inst) else None
        return evaluate(inst, traj).to_dict()


def _seeds(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out += list(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ScenarioError([f"--seeds: no seeds in {text!r}"])
    return out


def cmd_sweep(args) -> int:
    scen = load_scenario(args.scenario)
    instantiate(scen, seed=args.seed, h=args.h, T=args.T)  # validate once up front
    seeds = _seeds(args.seeds)
    data = scen.to_dict()
    workers = min(_threads(), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_one, [data] * len(seeds), seeds, [args.h] * len(seeds),
                                    [args.T] * len(seeds)))
    else:
        reports = [_sweep_one(data, s, args.h, args.T) for s in seeds]
    summary: dict[str, dict] = {}
    for rep in reports:
        for r in rep["results"]:
            entry = summary.setdefault(r["name"], {"values": [], "passed": 0})
            entry["passed"] += int(r["passed"])
            v = r["value"]
            if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
                entry["values"].append(float(v))
    for name, entry in summary.items():
        vals = entry.pop("values")
        if vals:
            entry.update(min=min(vals), max=max(vals), mean=sum(vals) / len(vals))
        entry["runs"] = len(reports)
    out = {"scenario": scen.name, "seeds": seeds, "workers": workers, "metrics": summary,
           "passed": all(r["passed"] for r in reports), "reports": reports}
    path = Path(args.out) / f"{scen.name}.sweep.json"
    _write_json(path, out)
    for name, e in summary.items():
        stats = f" min={e['min']:.4g} mean={e['mean']:.4g} max={e['max']:.4g}" if "min" in e else ""
        print(f"{name:30s} passed {e['passed']}/{e['runs']}{stats}")
    print(f"wrote {path}")
    return EXIT_OK if out["passed"] else EXIT_CHECK


PLOT_KINDS = ("xy", "component", "norm", "gains")


def plot_rows(header: list[str], data: np.ndarray, kind: str, prefix: str = ""):
    """Yield long-format rows (t, agent, series, value) from a trajectory CSV."""
    if kind not in PLOT_KINDS:
        raise ScenarioError([f"kind: unknown plot kind {kind!r}; expected one of {list(PLOT_KINDS)}"])
    cols = {name: k for k, name in enumerate(header)}
    t = data[:, 0]
    block = "c" if kind == "gains" else "x"
    agents: dict[int, list[int]] = {}
    for name, k in cols.items():
        parts = name.split("_")
        if len(parts) == 3 and parts[0] == block:
            agents.setdefault(int(parts[1]), []).append(k)
    if not agents:
        raise ScenarioError([f"kind: trajectory has no '{block}' columns"])
    for i in sorted(agents):
        idx = agents[i]
        if kind == "norm":
            series = {"norm": np.linalg.norm(data[:, idx], axis=1)}
        elif kind == "gains":
            series = {"c": data[:, idx[0]]}
        elif kind == "xy":
            series = {"x": data[:, idx[0]], "y": data[:, idx[1]] if len(idx) > 1 else np.zeros_like(t)}
        else:
            series = {f"x{k + 1}": data[:, j] for k, j in enumerate(idx)}
        for s, vals in series.items():
            for tk, v in zip(t, vals):
                yield tk, i, prefix + s, v


def cmd_plotdata(args) -> int:
    files = [Path(f) for f in args.trajectories]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "agent", "series", "value"])
    for f in files:
        try:
            header, data = read_csv(f)
        except ValueError as exc:
            raise ScenarioError([f"{f}: not a trajectory CSV ({exc})"]) from None
        prefix = f"{f.stem}:" if len(files) > 1 else ""
        for t, i, s, v in plot_rows(header, data, args.kind, prefix):
            w.writerow([repr(float(t)), i, s, repr(float(v))])
    stem = files[0].stem if len(files) == 1 else "combined"
    path = Path(args.out) / f"{stem}.{args.kind}.csv"
    _atomic_write(path, lambda fh: fh.write(buf.getvalue()))
    print(f"wrote {path}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msc-lab", description="Matrix-scaled consensus analysis and simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_run=True):
        sp.add_argument("scenario", help="built-in scenario name or path to a scenario JSON file")
        sp.add_argument("--out", default=".", help="output directory (default: current directory)")
        if with_run:
            sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
            sp.add_argument("--h", type=float, default=None, help="override the step size")
            sp.add_argument("--T", type=float, default=None, help="override the horizon")

    sub.add_parser("list", help="list built-in scenarios").set_defaults(func=cmd_list)
    sp = sub.add_parser("export", help="write a built-in scenario (or 'all') as JSON")
    common(sp, with_run=False)
    sp.set_defaults(func=cmd_export)
    sp = sub.add_parser("spectral", help="spectral report of the scaled Laplacian")
    common(sp)
    sp.set_defaults(func=cmd_spectral)
    sp = sub.add_parser("simulate", help="integrate the scenario and write a trajectory CSV")
    common(sp)
    sp.add_argument("--stride", type=int, default=None, help="record every k-th step")
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("check", help="simulate and evaluate the declared tolerances")
    common(sp)
    sp.set_defaults(func=cmd_check)
    sp = sub.add_parser("sweep", help="run the declared checks over several seeds")
    common(sp)
    sp.add_argument("--seeds", default="0-9", help="seed list such as '0-9' or '1,4,7' (default 0-9)")
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("plotdata", help="convert trajectory CSVs into long-format plot data")
    sp.add_argument("trajectories", nargs="+", help="trajectory CSV files written by 'simulate'")
    sp.add_argument("--kind", choices=PLOT_KINDS, default="xy")
    sp.add_argument("--out", default=".", help="output directory (default: current directory)")
    sp.set_defaults(func=cmd_plotdata)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        errors = getattr(exc, "errors", None) or [str(exc)]
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
