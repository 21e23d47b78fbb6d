"""Command line: ``roadkpp {speed,stationary,simulate,converge}``.

Exit codes: 0 success, 1 a convergence verdict failed, 2 numerical failure
(diagnostics written to ``diagnostics.json``), 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    solution_convergence_experiment, speed_convergence_experiment,
    stationary_experiment, uniform_spreading_experiment,
)
from .config import COMMANDS, EXPERIMENTS, ConfigError, RunConfig, parse_config
from .dispersion import Mode, envelope_speed, find_speed
from .errors import DomainError, InvalidParameter, NumericalFailure
from .model import ExchangeKernels
from .simulate import InitialDatum, ModelSpec, SimGrid, run
from .stationary import StationaryNumerics, solve_stationary

log = logging.getLogger("roadkpp")

EXIT_OK, EXIT_VERDICT, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

DEFAULT_EPS = {
    "speed": (0.4, 0.2, 0.1, 0.05),
    "stationary": (0.4, 0.2, 0.1, 0.05),
    "solution": (0.2, 0.1, 0.05),
    "spreading": (0.2, 0.1),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(value) -> str:
    """Fixed textual form: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_manifest(path: Path, cfg: RunConfig, extra: dict) -> None:
    data = {"program": "roadkpp", "version": __version__, "config": cfg.to_manifest(), **extra}
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=fmt) + "\n")


# --- argument parsing -----------------------------------------------------------

def _add_common(p, top=False):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="key=value file or JSON manifest")
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--threads", type=int, default=S)
    if top:
        return
    for name in ("D", "d", "mu_bar", "nu_bar", "f_prime0"):
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, default=S)
    p.add_argument("--kernel", default=S)
    p.add_argument("--independent", action="store_const", const="true", default=S)
    p.add_argument("--eps", default=S)
    p.add_argument("--eps-list", dest="eps_list", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="roadkpp", description="Road-field KPP spreading toolkit")
    _add_common(parser, top=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sp = sub.add_parser("speed", help="spreading speed from the dispersion relation")
    sp.add_argument("--mode", choices=("local", "nonlocal", "truncated"), default=S)
    sp.add_argument("--L", dest="L", default=S)
    sp.add_argument("--delta", default=S)
    sp.add_argument("--dump-curves", dest="dump_curves", action="store_const", const="true", default=S)
    sp.add_argument("--curve-samples", dest="curve_samples", default=S)
    st = sub.add_parser("stationary", help="stationary field profiles")
    st.add_argument("--Y", dest="Y", default=S)
    st.add_argument("--N", dest="N", default=S)
    st.add_argument("--dump-profile", dest="dump_profile", action="store_const", const="true", default=S)
    sm = sub.add_parser("simulate", help="time integration")
    sm.add_argument("--model", choices=("local", "nonlocal"), default=S)
    sm.add_argument("--T", dest="T", default=S)
    sm.add_argument("--dt", default=S)
    sm.add_argument("--grid", default=S, help="Lx,Ly,dx,dy")
    sm.add_argument("--no-refine", dest="refine", action="store_const", const="false", default=S)
    sm.add_argument("--datum", default=S)
    sm.add_argument("--datum-amp", dest="datum_amp", default=S)
    sm.add_argument("--datum-radius", dest="datum_radius", default=S)
    sm.add_argument("--snapshot-every", dest="snapshot_every", default=S)
    cv = sub.add_parser("converge", help="eps -> 0 convergence experiments")
    cv.add_argument("--experiment", choices=EXPERIMENTS, default=S)
    cv.add_argument("--T", dest="T", default=S)
    cv.add_argument("--dt", default=S)
    cv.add_argument("--grid", default=S, help="Lx,Ly,dx,dy")
    cv.add_argument("--t-sample", dest="t_sample", default=S)
    cv.add_argument("--probes", default=S)
    for p in (sp, st, sm, cv):
        _add_common(p)
    return parser


def config_from_args(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        raise UsageError(f"a subcommand is required: {', '.join(COMMANDS)}")
    path = ns.pop("config", None)
    ns["command"] = command
    return parse_config(path, ns)


# --- subcommands ----------------------------------------------------------------

def _kernels(cfg: RunConfig, params):
    return ExchangeKernels.default(params, independent=cfg.independent, shape=cfg.kernel)


def _dispersion_mode(cfg: RunConfig) -> Mode:
    if cfg.mode == "local":
        return Mode.local()
    if cfg.mode == "nonlocal":
        return Mode.nonlocal_(cfg.eps)
    return Mode.truncated(cfg.eps, cfg.L, cfg.delta)


def cmd_speed(cfg: RunConfig, out: Path) -> dict:
    params = cfg.params()
    mode = _dispersion_mode(cfg)
    res = find_speed(params, _kernels(cfg, params), mode,
                     curve_samples=cfg.curve_samples if cfg.dump_curves else 0)
    eps = 0.0 if cfg.mode == "local" else cfg.eps
    L = cfg.L if cfg.mode == "truncated" else math.inf
    delta = cfg.delta if cfg.mode == "truncated" else 0.0
    write_csv(out / "speed.csv",
              ["mode", "eps", "L", "delta", "c_star", "lambda_star", "phi0", "iterations", "residual"],
              [[cfg.mode, eps, L, delta, res.c_star, res.lambda_star, res.phi0,
                res.iterations, res.residual]])
    if cfg.dump_curves:
        dg = res.diagnostics
        write_csv(out / "curves.csv", ["lambda", "psi1", "psi2"],
                  zip(dg["lambda"], dg["psi1"], dg["psi2"]))
    return {"c_star": res.c_star}


def cmd_stationary(cfg: RunConfig, out: Path) -> dict:
    params = cfg.params()
    kernels = _kernels(cfg, params)
    numerics = StationaryNumerics(Y=cfg.Y, N=cfg.N)
    eps_list = cfg.eps_list or (cfg.eps,)
    rows, profiles = [], []
    for eps in eps_list:
        st = solve_stationary(params, kernels, eps, numerics)
        rows.append([st.eps, st.U, st.sup_dev, st.residual, st.iterations])
        profiles.append(st)
    write_csv(out / "stationary.csv", ["eps", "U", "sup_dev", "residual", "iters"], rows)
    if cfg.dump_profile:
        write_csv(out / "profile.csv", ["eps", "y", "V"],
                  ([st.eps, y, v] for st in profiles for y, v in zip(st.grid, st.V)))
    return {}


def sim_grid(cfg: RunConfig, model: ModelSpec, default=(150.0, 30.0, 0.25, 0.25)) -> SimGrid:
    Lx, Ly, dx, dy = cfg.grid or default
    if model.kind == "nonlocal" and cfg.refine and dy > model.eps / 8:
        return SimGrid.resolving(Lx, Ly, dx, model.eps, dy_far=dy)
    return SimGrid(Lx, Ly, dx, dy)


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    params = cfg.params()
    model = ModelSpec.nonlocal_(cfg.eps) if cfg.model == "nonlocal" else ModelSpec.local()
    grid = sim_grid(cfg, model)
    datum = InitialDatum(cfg.datum, cfg.datum_amp, cfg.datum_amp, cfg.datum_radius)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    x, y = grid.x, grid.y
    written = []

    def snapshot(state):
        k = len(written)
        write_csv(snaps / f"u_{k:04d}.csv", ["x", "u"], zip(x, state.u))
        write_csv(snaps / f"v_{k:04d}.csv", ["x", "y", "v"],
                  ((x[i], y[j], state.v[i, j]) for i in range(len(x)) for j in range(len(y))))
        written.append(state.t)
        return state.t

    res = run(params, _kernels(cfg, params), model, datum, grid,
              cfg.T if cfg.T is not None else 10.0, cfg.dt,
              observers={"snap": snapshot}, sample_every=cfg.snapshot_every)
    return {
        "grid": {"Lx": grid.Lx, "Ly": grid.Ly, "dx": grid.dx, "dy": grid.dy,
                 "y_core": grid.y_core, "dy_far": grid.dy_far, "Nx": grid.Nx, "Ny": grid.Ny},
        "dt": cfg.dt if cfg.dt is not None else 0.25 * min(grid.dx, grid.dy_min),
        "steps": res.steps, "snapshot_times": written, "guard_margin": res.guard_margin,
    }


def _short(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".6g")
    return fmt(value)


def _table_markdown(table) -> str:
    lines = [f"## {table.name}", "", "| " + " | ".join(table.columns) + " |",
             "|" + "---|" * len(table.columns)]
    for row in table.rows:
        lines.append("| " + " | ".join(_short(row[c]) for c in table.columns) + " |")
    lines.append("")
    for key, value in table.notes.items():
        lines.append(f"- {key}: {_short(value)}")
    verdict = {True: "PASS", False: "FAIL", None: "not judged"}[table.verdict]
    lines += ["", f"Verdict: **{verdict}**", ""]
    return "\n".join(lines)


def cmd_converge(cfg: RunConfig, out: Path) -> dict:
    params = cfg.params()
    kernels = _kernels(cfg, params)
    eps_list = cfg.eps_list or DEFAULT_EPS[cfg.experiment]
    if cfg.experiment == "speed":
        table = speed_convergence_experiment(params, kernels, eps_list)
    elif cfg.experiment == "stationary":
        table = stationary_experiment(params, kernels, eps_list, StationaryNumerics(cfg.Y, cfg.N))
    elif cfg.experiment == "solution":
        Lx, Ly, dx, dy = cfg.grid or (20.0, 5.0, 0.05, min(eps_list) / 8)
        table = solution_convergence_experiment(
            params, kernels, eps_list, cfg.t_sample, SimGrid(Lx, Ly, dx, dy), dt=cfg.dt)
    else:
        c_bar, _ = envelope_speed(params)
        probes = cfg.probes or (1.5 * c_bar, 0.5 * params.c_kpp)
        Lx, Ly, dx, dy_far = cfg.grid or (480.0, 30.0, 0.5, 0.5)
        grid = SimGrid.resolving(Lx, Ly, dx, min(eps_list), dy_far=dy_far)
        T = cfg.T if cfg.T is not None else 120.0
        table = uniform_spreading_experiment(
            params, kernels, eps_list, probes, InitialDatum(), T, grid,
            dt=cfg.dt if cfg.dt is not None else 0.25 * dx)
    write_csv(out / f"converge_{table.name}.csv", table.columns,
              ([row[c] for c in table.columns] for row in table.rows))
    (out / "summary.md").write_text(f"# Convergence experiment: {table.name}\n\n" + _table_markdown(table))
    return {"verdict": table.verdict, "notes": table.notes}


COMMAND_TABLE = {"speed": cmd_speed, "stationary": cmd_stationary,
                 "simulate": cmd_simulate, "converge": cmd_converge}


def dispatch(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        extra = COMMAND_TABLE[cfg.command](cfg, out)
    except (NumericalFailure, DomainError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {})}
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, default=fmt) + "\n")
        print(f"roadkpp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidParameter as exc:
        print(f"roadkpp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    extra["wall_clock_s"] = time.perf_counter() - start
    write_manifest(out / "manifest.json", cfg, extra)
    if extra.get("verdict") is False:
        return EXIT_VERDICT
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
    except (UsageError, ConfigError) as exc:
        print(f"roadkpp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
