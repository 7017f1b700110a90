"""Command-line surface.

Every run resolves its full configuration (defaults included), hashes
it, and emits one `summary.json` plus command-specific CSV files into
the output directory.  Reruns with the same flags and seed are byte
identical.  Exit codes: 0 success, 1 invalid input, 2 resource limit,
3 a search that ended without stabilizing.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, io, qsl
from .controls import BangOffControl, format_word, parse_word, to_piecewise
from .errors import (
    BangoffError,
    BracketingError,
    InvalidInputError,
    ResourceLimitError,
)
from .model import load_system, system_to_dict
from .objective import evaluate as evaluate_control
from .optimize import (
    SdConfig,
    crab_optimize,
    multi_start,
    one_flip_sd,
    quasi_newton,
    sd_durations,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise InvalidInputError(message)


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse number list {text!r}") from exc


def _grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidInputError(f"grid spec must be lo:hi:n, got {text!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    return np.linspace(lo, hi, n)


def _axis(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidInputError(f"axis spec must be lo:hi:n, got {text!r}")
    return float(parts[0]), float(parts[1]), int(parts[2])


def build_parser() -> _Parser:
    parser = _Parser(prog="bangoff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        if system:
            p.add_argument("--system", required=True, help="system definition JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--svg", action="store_true", help="also render SVG plots")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("evaluate", help="fidelity and Bures distance of a given control")
    common(p)
    p.add_argument("--type", help="bang-off type word, e.g. P0N")
    p.add_argument("--durations", help="comma-separated segment durations")
    p.add_argument("--piecewise", help="piecewise control CSV (t,u with dt/bound metadata)")

    p = sub.add_parser("optimize", help="run one of the optimizers")
    common(p)
    p.add_argument("--method", required=True, choices=["sd", "qn", "flip", "crab"])
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--type", help="bang-off type word (sd/qn)")
    p.add_argument("--durations", help="start durations for qn")
    p.add_argument("--points", type=int, default=1, help="multi-start points")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--NT", type=int, default=40, help="time slots for flip")
    p.add_argument("--Nc", type=int, default=3, help="Fourier modes for crab")
    p.add_argument("--restarts", type=int, default=20, help="crab restarts")

    p = sub.add_parser("qsl", help="estimate the quantum speed limit")
    common(p)
    p.add_argument("--delta", type=float, default=1e-9)
    p.add_argument("--Ns", type=int, default=6, help="largest switch count tried")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--T-max", dest="T_max", type=float, default=4.0)
    p.add_argument("--points", type=int, default=20, help="search starts per type")
    p.add_argument("--iters", type=int, default=2000, help="SD iterations per probe")

    p = sub.add_parser("tc", help="critical duration where one switch starts to help")
    common(p)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--bracket", default="0.4,1.2", help="lo,hi bisection bracket")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--iters", type=int, default=2000)

    p = sub.add_parser("sweep", help="best fidelity over a grid of durations")
    common(p)
    p.add_argument("--Ns", type=int, required=True)
    p.add_argument("--T-grid", dest="T_grid", required=True, help="lo:hi:n duration grid")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--iters", type=int, default=2000)

    p = sub.add_parser("landscape", help="fidelity or log-Bures scan over two durations")
    common(p)
    p.add_argument("--type", required=True)
    p.add_argument("--mode", choices=["free", "fixed"], default="free")
    p.add_argument("--T", type=float, help="total duration (fixed mode)")
    p.add_argument("--t1", required=True, help="lo:hi:n first axis")
    p.add_argument("--t2", required=True, help="lo:hi:n second axis")
    p.add_argument("--value", choices=["fidelity", "log_bures"], default="fidelity")

    p = sub.add_parser("robustness", help="error statistics under Gaussian perturbations")
    common(p)
    p.add_argument("--type", required=True)
    p.add_argument("--durations", required=True)
    p.add_argument("--mode", choices=["durations", "bound"], default="durations")
    p.add_argument("--sigmas", required=True, help="comma-separated perturbation scales")
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("distances", help="pairwise distances of an optimized ensemble")
    common(p, system=False)
    p.add_argument("--input", required=True, help="ensemble CSV from `optimize --method flip`")

    return parser


def _resolved_config(args, system_doc: dict | None) -> dict:
    skip = {"out", "svg", "threads", "system"}
    config = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if system_doc is not None:
        config["system"] = system_doc
    return config


def _maybe_svg(args, render, *render_args):
    if args.svg:
        render(*render_args)


def _render_control_svg(path, control):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows, pw = io.control_rows(control)
    fig, ax = plt.subplots(figsize=(6, 3))
    edges = np.arange(pw.n_slots + 1) * pw.dt
    ax.stairs(pw.values, edges)
    ax.set_xlabel("t")
    ax.set_ylabel("u(t)")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _render_heatmap_svg(path, grid):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(grid.axis2, grid.axis1, grid.values, shading="auto")
    fig.colorbar(mesh, ax=ax, label=grid.value_kind)
    ax.set_xlabel("t2")
    ax.set_ylabel("t1")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _render_hist_svg(path, dist):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3))
    ax.stairs(dist.counts, dist.bin_edges, fill=True)
    ax.set_xlabel("D")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _make_budget(args) -> qsl.SearchBudget:
    return qsl.SearchBudget(
        starts=args.points, sd_iterations=args.iters, seed=args.seed
    )


def _cmd_evaluate(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    if args.piecewise:
        control = io.read_piecewise_csv(args.piecewise)
    elif args.type is not None and args.durations is not None:
        control = BangOffControl(
            word=parse_word(args.type), durations=_floats(args.durations), bound=system.bound
        )
    else:
        raise InvalidInputError("evaluate needs --type/--durations or --piecewise")
    report = evaluate_control(system, control, control.total)
    results = {
        "fidelity": report.fidelity,
        "bures": report.bures,
        "T": report.duration,
        "final_state": [[a.real, a.imag] for a in report.final_state],
    }
    io.write_summary(out / "summary.json", "evaluate", config, results)
    if control.total > 0:
        io.write_control_csv(out / "control.csv", control, cfg_hash)
        _maybe_svg(args, _render_control_svg, out / "control.svg", control)
    return 0


def _cmd_optimize(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    base = SdConfig(iterations=args.iters, seed=args.seed)
    if args.method in ("sd", "qn") and not args.type:
        raise InvalidInputError(f"--type is required for method {args.method}")

    if args.method == "sd":
        word = parse_word(args.type)
        worker = lambda seed: sd_durations(system, word, args.T, replace(base, seed=seed))
        results = multi_start(args.points, worker, args.seed, threads=args.threads)
    elif args.method == "qn":
        word = parse_word(args.type)
        if args.durations:
            start = _floats(args.durations)
        else:
            rng = np.random.default_rng(args.seed)
            from .controls import random_durations

            start = random_durations(len(word), args.T, rng)
        results = [quasi_newton(system, word, args.T, start, seed=args.seed)]
    elif args.method == "flip":
        worker = lambda seed: one_flip_sd(system, args.T, args.NT, replace(base, seed=seed))
        results = multi_start(args.points, worker, args.seed, threads=args.threads)
    else:
        results = [
            crab_optimize(system, args.T, args.Nc, restarts=args.restarts, seed=args.seed)
        ]

    best = max(results, key=lambda r: r.best_fidelity)
    payload = io.result_payload(best)
    payload["points"] = [r.best_fidelity for r in results]
    io.write_summary(out / "summary.json", "optimize", config, payload)
    io.write_trace_csv(out / "trace.csv", results, cfg_hash)
    io.write_control_csv(out / "control.csv", best.best_control, cfg_hash)
    if args.method == "flip":
        io.write_ensemble_csv(
            out / "ensemble.csv", [r.best_control for r in results], cfg_hash
        )
    _maybe_svg(args, _render_control_svg, out / "control.svg", best.best_control)
    return 0


def _cmd_qsl(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    report = qsl.estimate_qsl(
        system,
        delta=args.delta,
        ns_max=args.Ns,
        tol=args.tol,
        t_cap=args.T_max,
        budget=_make_budget(args),
    )
    io.write_summary(out / "summary.json", "qsl", config, report.to_dict())
    rows = [
        (format_word(w), io.fmt(f), " ".join(io.fmt(x) for x in d))
        for w, f, d in zip(
            report.optimal_types, report.witness_fidelities, report.optimal_durations
        )
    ]
    io.write_csv(out / "witnesses.csv", ["type", "fidelity", "durations"], rows, cfg_hash)
    return 0 if report.converged else 3


def _cmd_tc(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    bracket = _floats(args.bracket)
    if bracket.size != 2:
        raise InvalidInputError("--bracket needs two comma-separated values")
    report = qsl.critical_time(
        system,
        epsilon=args.epsilon,
        bracket=(float(bracket[0]), float(bracket[1])),
        tol=args.tol,
        budget=_make_budget(args),
    )
    io.write_summary(
        out / "summary.json",
        "tc",
        config,
        {
            "T_c": report.t_c,
            "epsilon": report.epsilon,
            "bracket": list(report.bracket),
            "gap_low": report.gap_low,
            "gap_high": report.gap_high,
        },
    )
    return 0


def _cmd_sweep(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    rows = qsl.fidelity_vs_total(system, args.Ns, _grid(args.T_grid), budget=_make_budget(args))
    io.write_csv(
        out / "sweep.csv",
        ["T", "best_F", "best_type"],
        [(T, f, format_word(w)) for T, f, w in rows],
        cfg_hash,
    )
    io.write_summary(
        out / "summary.json",
        "sweep",
        config,
        {"rows": [[T, f, format_word(w)] for T, f, w in rows]},
    )
    return 0


def _cmd_landscape(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    grid = analysis.landscape(
        system,
        parse_word(args.type),
        _axis(args.t1),
        _axis(args.t2),
        mode=args.mode,
        total=args.T,
        value_kind=args.value,
    )
    rows = []
    for i, a in enumerate(grid.axis1):
        for j, b in enumerate(grid.axis2):
            v = grid.values[i, j]
            if not np.isnan(v):
                rows.append((a, b, v))
    io.write_csv(out / "landscape.csv", ["t1", "t2", "value"], rows, cfg_hash)
    flat = np.nanargmax(grid.values) if args.value == "fidelity" else np.nanargmin(grid.values)
    i, j = np.unravel_index(flat, grid.values.shape)
    io.write_summary(
        out / "summary.json",
        "landscape",
        config,
        {
            "cells": len(rows),
            "extremum": {
                "t1": float(grid.axis1[i]),
                "t2": float(grid.axis2[j]),
                "value": float(grid.values[i, j]),
            },
        },
    )
    _maybe_svg(args, _render_heatmap_svg, out / "landscape.svg", grid)
    return 0


def _cmd_robustness(args, out: Path) -> int:
    system = load_system(args.system)
    config = _resolved_config(args, system_to_dict(system))
    cfg_hash = io.config_hash(config)
    control = BangOffControl(
        word=parse_word(args.type), durations=_floats(args.durations), bound=system.bound
    )
    stats = analysis.robustness(
        system, control, args.mode, _floats(args.sigmas), n_samples=args.samples, seed=args.seed
    )
    rows = [(s.sigma, s.mode, s.mean_error, s.std_error, s.n_samples) for s in stats]
    io.write_csv(
        out / "robustness.csv", ["sigma", "mode", "mean_error", "std_error", "n"], rows, cfg_hash
    )
    results = {
        "stats": [
            {
                "sigma": s.sigma,
                "mean_error": s.mean_error,
                "std_error": s.std_error,
                "n": s.n_samples,
            }
            for s in stats
        ]
    }
    if len(stats) >= 3 and all(s.mean_error > 0 for s in stats):
        results["loglog_slope"] = analysis.loglog_slope(
            [(s.sigma, s.mean_error) for s in stats]
        )
    io.write_summary(out / "summary.json", "robustness", config, results)
    return 0


def _cmd_distances(args, out: Path) -> int:
    controls = io.read_ensemble_csv(args.input)
    config = _resolved_config(args, None)
    config["n_controls"] = len(controls)
    cfg_hash = io.config_hash(config)
    dist = analysis.distance_distribution(controls)
    rows = []
    n = len(controls)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            rows.append((i, j, dist.distances[k]))
            k += 1
    io.write_csv(out / "distances.csv", ["i", "j", "D"], rows, cfg_hash)
    io.write_summary(
        out / "summary.json",
        "distances",
        config,
        {
            "n_pairs": int(dist.distances.size),
            "peak_count": dist.peak_count,
            "peak_positions": [float(x) for x in dist.peak_positions],
        },
    )
    _maybe_svg(args, _render_hist_svg, out / "distances.svg", dist)
    return 0


_HANDLERS = {
    "evaluate": _cmd_evaluate,
    "optimize": _cmd_optimize,
    "qsl": _cmd_qsl,
    "tc": _cmd_tc,
    "sweep": _cmd_sweep,
    "landscape": _cmd_landscape,
    "robustness": _cmd_robustness,
    "distances": _cmd_distances,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](args, out)
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, BracketingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BangoffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
