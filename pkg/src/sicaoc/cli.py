"""Command-line front end.

Subcommands
-----------
simulate   integrate the fraction model with one method, write CSV + manifest
optimize   run the forward-backward sweep, write CSV + manifest
compare    difference-norm tables of the fixed-step methods vs the baseline
orders     empirical convergence-order report

Configuration is a single JSON document; every field is optional and
falls back to the default scenario.  Unknown keys are rejected.  All
file outputs (CSV trajectories, JSON manifests, gnuplot scripts) are
byte-deterministic for a fixed configuration, and each manifest embeds
the fully resolved configuration needed to reproduce the run.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure or
non-convergence, 4 I/O failure.  Errors print one machine-parsable line
``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (OCTAVE_ODE45_BASELINE, ORDER_BANDS, VARIABLES,
                       build_norm_table, convergence_order,
                       reference_trajectory, simplex_drift,
                       stationarity_residual)
from .integrators import (FIXED_METHODS, AdaptiveSettings, IntegrationFailure,
                          StepLimitExceeded, TimeGrid, integrate_dp45,
                          integrate_fixed)
from .model import (ADJOINT_MODES, ControlBounds, ModelParams, objective,
                    rhs_normalized)
from .sweep import (SweepNonConvergence, SweepSettings, forward_pass,
                    sica_problem, solve)

SIMULATE_HEADER = ("t", "s", "i", "c", "a")
OPTIMIZE_HEADER = SIMULATE_HEADER + ("u", "lambda1", "lambda2", "lambda3", "lambda4")
PLOT_KINDS = ("states", "states-vs-uncontrolled", "control")

_PARAM_KEYS = ("mu", "b", "beta", "eta_c", "eta_a", "phi", "rho", "alpha", "omega", "d")
_CONTROL_KEYS = ("u_max", "relaxation", "delta_error", "max_iterations")


class ConfigError(ValueError):
    """Configuration file is malformed or violates an invariant."""


class IoFailure(RuntimeError):
    """A required input file is missing or unreadable."""


@dataclass
class ControlConfig:
    u_max: float = 0.5
    relaxation: float = 0.5
    delta_error: float = 1e-3
    max_iterations: int = 500


@dataclass
class RunConfig:
    """Fully resolved run configuration with the default scenario filled in."""

    params: ModelParams
    initial: np.ndarray
    horizon: float
    steps: int | None          # per-command default applied when None
    control: ControlConfig
    adjoint_mode: str
    refinements: tuple[int, ...]
    output: dict

    def resolved_dict(self, steps: int) -> dict:
        p = self.params
        return {
            "params": {k: float(getattr(p, k)) for k in _PARAM_KEYS},
            "initial": {k: float(v) for k, v in zip("sica", self.initial)},
            "horizon": float(self.horizon),
            "steps": int(steps),
            "control": {
                "u_max": float(self.control.u_max),
                "relaxation": float(self.control.relaxation),
                "delta_error": float(self.control.delta_error),
                "max_iterations": int(self.control.max_iterations),
            },
            "adjoint_mode": self.adjoint_mode,
            "refinements": [int(m) for m in self.refinements],
            "output": dict(self.output),
        }


def _reject_unknown(mapping: dict, allowed, where: str):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key(s) {unknown} in {where}")


def _number(mapping: dict, key: str, where: str, default):
    value = mapping.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return value


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(doc, ("params", "initial", "horizon", "steps", "control",
                          "adjoint_mode", "refinements", "output"), "config")

    raw_params = doc.get("params", {})
    if not isinstance(raw_params, dict):
        raise ConfigError("config.params must be an object")
    _reject_unknown(raw_params, _PARAM_KEYS, "config.params")
    kwargs = {k: _number(raw_params, k, "params", None) for k in raw_params}
    try:
        params = ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc

    raw_initial = doc.get("initial", {})
    if not isinstance(raw_initial, dict):
        raise ConfigError("config.initial must be an object")
    _reject_unknown(raw_initial, tuple("sica"), "config.initial")
    defaults = {"s": 0.6, "i": 0.2, "c": 0.1, "a": 0.1}
    initial = np.array([_number(raw_initial, k, "initial", defaults[k])
                        for k in "sica"], dtype=float)
    if np.any(initial < 0.0) or np.any(initial > 1.0):
        raise ConfigError("initial fractions must lie in [0, 1]")
    if abs(float(initial.sum()) - 1.0) > 1e-9:
        raise ConfigError(f"initial fractions must sum to 1, got {initial.sum()!r}")

    horizon = _number(doc, "horizon", "config", 20.0)
    if horizon <= 0.0:
        raise ConfigError(f"horizon must be positive, got {horizon}")

    steps = doc.get("steps")
    if steps is not None:
        if isinstance(steps, bool) or not isinstance(steps, int):
            raise ConfigError(f"steps must be an integer, got {steps!r}")
        if steps < 1:
            raise ConfigError(f"grid requires at least 1 step, got steps={steps}")

    raw_control = doc.get("control", {})
    if not isinstance(raw_control, dict):
        raise ConfigError("config.control must be an object")
    _reject_unknown(raw_control, _CONTROL_KEYS, "config.control")
    control = ControlConfig(
        u_max=_number(raw_control, "u_max", "control", 0.5),
        relaxation=_number(raw_control, "relaxation", "control", 0.5),
        delta_error=_number(raw_control, "delta_error", "control", 1e-3),
        max_iterations=int(_number(raw_control, "max_iterations", "control", 500)),
    )
    if not 0.0 <= control.u_max < 1.0:
        raise ConfigError(f"control.u_max must lie in [0, 1), got {control.u_max}")
    if not 0.0 < control.relaxation <= 1.0:
        raise ConfigError("control.relaxation must lie in (0, 1]")
    if control.delta_error <= 0.0:
        raise ConfigError("control.delta_error must be positive")
    if control.max_iterations < 1:
        raise ConfigError("control.max_iterations must be at least 1")

    adjoint_mode = doc.get("adjoint_mode", "derived")
    if adjoint_mode not in ADJOINT_MODES:
        raise ConfigError(
            f"adjoint_mode must be one of {ADJOINT_MODES}, got {adjoint_mode!r}")

    refinements = doc.get("refinements", [100, 200, 400, 800])
    if (not isinstance(refinements, list) or len(refinements) < 3
            or any(isinstance(m, bool) or not isinstance(m, int) or m < 1
                   for m in refinements)):
        raise ConfigError("refinements must be a list of at least 3 positive integers")

    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("config.output must be an object")
    _reject_unknown(output, ("csv", "manifest"), "config.output")

    return RunConfig(params=params, initial=initial, horizon=float(horizon),
                     steps=steps, control=control, adjoint_mode=adjoint_mode,
                     refinements=tuple(refinements), output=output)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------- output


def _fmt(value: float) -> str:
    # repr of a double is the shortest string that round-trips exactly
    return repr(float(value))


def write_csv(path: Path, header, columns) -> None:
    rows = [",".join(header)]
    n = len(columns[0])
    for k in range(n):
        rows.append(",".join(
            col[k] if isinstance(col[k], str) else _fmt(col[k])
            for col in columns))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8", newline="\n")


def _manifest_base(command: str, config: RunConfig, steps: int) -> dict:
    return {
        "tool": {"name": "sicaoc", "version": __version__},
        "command": command,
        "config": config.resolved_dict(steps),
    }


def _out_paths(out: str | None, config: RunConfig, default_stem: str):
    csv = Path(out) if out else Path(config.output.get("csv", f"{default_stem}.csv"))
    if config.output.get("manifest"):
        manifest = Path(config.output["manifest"])
    elif csv.name.endswith(".csv"):
        manifest = csv.with_name(csv.name[:-4] + ".manifest.json")
    else:
        manifest = csv.with_name(csv.name + ".manifest.json")
    return csv, manifest


def _read_csv_header(path: Path) -> list[str]:
    if not path.is_file():
        raise IoFailure(f"csv file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    return first.split(",") if first else []


def emit_plot_script(csv_path: Path, kind: str, out_path: Path | None = None,
                     baseline_csv: Path | None = None) -> Path:
    """Write a gnuplot script rendering one figure kind from a CSV file.

    The script text depends only on the input paths, so repeated calls
    are byte-stable.
    """
    csv_path = Path(csv_path)
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    header = _read_csv_header(csv_path)
    needed = OPTIMIZE_HEADER[:6] if kind == "control" else SIMULATE_HEADER
    if list(header[:len(needed)]) != list(needed):
        raise IoFailure(f"{csv_path} lacks the expected header {','.join(needed)}")
    if kind == "states-vs-uncontrolled":
        if baseline_csv is None:
            raise ValueError("states-vs-uncontrolled needs a baseline csv")
        baseline_csv = Path(baseline_csv)
        base_header = _read_csv_header(baseline_csv)
        if list(base_header[:5]) != list(SIMULATE_HEADER):
            raise IoFailure(
                f"{baseline_csv} lacks the expected header {','.join(SIMULATE_HEADER)}")
    out_path = out_path or csv_path.with_suffix(f".{kind}.gp")
    png = out_path.with_suffix(".png").name
    lines = [
        f"# generated by sicaoc {__version__}",
        'set datafile separator ","',
        "set key autotitle columnhead",
        'set xlabel "t (years)"',
        "set grid",
        "set terminal pngcairo size 900,600",
        f'set output "{png}"',
    ]
    if kind == "states":
        lines.append('set ylabel "population fraction"')
        curves = [f'"{csv_path.name}" using "t":"{v}" with lines lw 2 title "{v}"'
                  for v in "sica"]
        lines.append("plot " + ", \\\n     ".join(curves))
    elif kind == "control":
        lines.append('set ylabel "prevention effort u"')
        lines.append("set yrange [0:*]")
        lines.append(f'plot "{csv_path.name}" using "t":"u" with lines lw 2 title "u"')
    else:
        lines.append('set ylabel "population fraction"')
        curves = [f'"{csv_path.name}" using "t":"{v}" with lines lw 2 '
                  f'title "{v} (control)"' for v in "sica"]
        curves += [f'"{baseline_csv.name}" using "t":"{v}" with lines dt 2 lw 2 '
                   f'title "{v} (no control)"' for v in "sica"]
        lines.append("plot " + ", \\\n     ".join(curves))
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return out_path


# ------------------------------------------------------------ subcommands


def cmd_simulate(config: RunConfig, method: str, out: str | None,
                 plot: bool) -> int:
    steps = config.steps if config.steps is not None else 100
    grid = TimeGrid(0.0, config.horizon, steps)
    field = lambda t, x: rhs_normalized(config.params, x)
    integrator: dict = {"sampling": "clip-to-node"}
    if method == "dp45":
        settings = AdaptiveSettings()
        traj = integrate_dp45(field, grid.t0, grid.tf, config.initial, settings, grid)
        integrator.update({"reltol": settings.reltol, "abstol": settings.abstol,
                           "initial_step": (grid.tf - grid.t0) / 100.0,
                           "max_steps": settings.max_steps})
    else:
        traj = integrate_fixed(method, field, grid, config.initial)
        integrator.update({"step_size": grid.h})
    csv_path, manifest_path = _out_paths(out, config, f"simulate_{method}")
    times = traj.times()
    write_csv(csv_path, SIMULATE_HEADER,
              [times] + [traj.states[:, k] for k in range(4)])
    drift = simplex_drift(traj)
    manifest = _manifest_base("simulate", config, steps)
    manifest["method"] = method
    manifest["integrator"] = integrator
    manifest["diagnostics"] = {"simplex_drift": drift}
    manifest["outputs"] = {"csv": str(csv_path)}
    plots = []
    if plot:
        plots.append(str(emit_plot_script(csv_path, "states")))
        manifest["outputs"]["plots"] = plots
    write_manifest(manifest_path, manifest)
    print(f"simulate method={method} steps={steps} horizon={config.horizon}")
    print(f"max |s+i+c+a-1| = {_fmt(drift)}")
    for p in [csv_path, manifest_path] + plots:
        print(f"wrote {p}")
    return 0


def cmd_optimize(config: RunConfig, out: str | None, plot: bool) -> int:
    steps = config.steps if config.steps is not None else 1000
    grid = TimeGrid(0.0, config.horizon, steps)
    bounds = ControlBounds(config.control.u_max)
    problem = sica_problem(config.params, bounds, config.initial,
                           config.adjoint_mode)
    settings = SweepSettings(grid=grid, delta_error=config.control.delta_error,
                             relaxation=config.control.relaxation,
                             max_iterations=config.control.max_iterations)
    try:
        result = solve(problem, settings)
        failure = None
    except SweepNonConvergence as exc:
        result = exc.result
        failure = str(exc)
    zero_u = np.zeros(grid.node_count)
    uncontrolled = forward_pass(problem, zero_u, grid)
    j_zero = objective(uncontrolled, zero_u)

    csv_path, manifest_path = _out_paths(out, config, "optimize")
    times = result.states.times()
    write_csv(csv_path, OPTIMIZE_HEADER,
              [times] + [result.states.states[:, k] for k in range(4)]
              + [result.control] + [result.adjoints.states[:, k] for k in range(4)])
    residual = stationarity_residual(result, config.params)
    manifest = _manifest_base("optimize", config, steps)
    manifest["integrator"] = {"scheme": "forward-backward rk4", "step_size": grid.h}
    manifest["diagnostics"] = {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_margin": result.final_margin,
        "objective": result.objective,
        "objective_zero_control": j_zero,
        "stationarity_residual": residual,
        "simplex_drift": simplex_drift(result.states),
        "terminal_adjoint": [float(v) for v in result.adjoints.states[-1]],
        "control_range": [float(result.control.min()), float(result.control.max())],
    }
    manifest["outputs"] = {"csv": str(csv_path)}
    plots = []
    baseline_path = None
    if plot:
        baseline_path = csv_path.with_suffix(".uncontrolled.csv")
        write_csv(baseline_path, SIMULATE_HEADER,
                  [times] + [uncontrolled.states[:, k] for k in range(4)])
        manifest["outputs"]["uncontrolled_csv"] = str(baseline_path)
        plots.append(str(emit_plot_script(csv_path, "states-vs-uncontrolled",
                                          baseline_csv=baseline_path)))
        plots.append(str(emit_plot_script(csv_path, "control")))
        manifest["outputs"]["plots"] = plots
    write_manifest(manifest_path, manifest)
    print(f"optimize steps={steps} horizon={config.horizon} "
          f"u_max={config.control.u_max} adjoint={config.adjoint_mode}")
    print(f"converged={result.converged} iterations={result.iterations} "
          f"margin={_fmt(result.final_margin)}")
    print(f"J(u*) = {_fmt(result.objective)}  J(0) = {_fmt(j_zero)}")
    for p in [csv_path, manifest_path] + ([baseline_path] if baseline_path else []) + plots:
        print(f"wrote {p}")
    if failure is not None:
        print(f"error: numeric: {failure}", file=sys.stderr)
        return 3
    return 0


def cmd_compare(config: RunConfig, out: str | None) -> int:
    steps = config.steps if config.steps is not None else 100
    grid = TimeGrid(0.0, config.horizon, steps)
    settings = AdaptiveSettings()
    reference = reference_trajectory(config.params, config.initial, grid, settings)
    tables = {m: build_norm_table(m, config.params, config.initial, grid,
                                  reference=reference) for m in FIXED_METHODS}
    csv_path, manifest_path = _out_paths(out, config, "compare_norms")
    print(f"difference norms vs adaptive 5(4) reference "
          f"(reltol={settings.reltol}, abstol={settings.abstol}) "
          f"on {grid.node_count} nodes of [0, {grid.tf}]")
    print(f"{'method':7s} {'var':3s} {'norm':4s} {'computed':>14s} "
          f"{'ode45 baseline':>14s} {'rel dev':>9s}")
    rows = []
    worst = {m: 0.0 for m in FIXED_METHODS}
    for method, table in tables.items():
        baseline = OCTAVE_ODE45_BASELINE[method]
        for var in VARIABLES:
            ours = table.per_variable[var].as_tuple()
            for norm_name, got, ref in zip(("1", "2", "inf"), ours, baseline[var]):
                dev = (got - ref) / ref
                worst[method] = max(worst[method], abs(dev))
                print(f"{method:7s} {var:3s} {norm_name:4s} {got:14.7f} "
                      f"{ref:14.7f} {dev:+9.4f}")
                rows.append((method, var, norm_name, got, ref, dev))
    write_csv(csv_path,
              ("method", "variable", "norm", "computed", "baseline", "rel_dev"),
              [[r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
               [_fmt(r[3]) for r in rows], [_fmt(r[4]) for r in rows],
               [_fmt(r[5]) for r in rows]])
    manifest = _manifest_base("compare", config, steps)
    manifest["integrator"] = {"reltol": settings.reltol, "abstol": settings.abstol,
                              "sampling": "clip-to-node"}
    manifest["diagnostics"] = {"max_abs_rel_dev": {m: worst[m] for m in FIXED_METHODS}}
    manifest["outputs"] = {"csv": str(csv_path)}
    write_manifest(manifest_path, manifest)
    print(f"wrote {csv_path}")
    print(f"wrote {manifest_path}")
    return 0


def cmd_orders(config: RunConfig, out: str | None) -> int:
    csv_path, manifest_path = _out_paths(out, config, "orders")
    studies = {m: convergence_order(m, config.params, config.initial,
                                    config.refinements, 0.0, config.horizon)
               for m in FIXED_METHODS}
    print(f"terminal-error convergence at t={config.horizon} over "
          f"M={list(config.refinements)} (reference: adaptive 5(4), reltol=1e-12)")
    print(f"{'method':7s} {'slope':>7s} {'band':>12s} {'status':>7s}")
    slopes = {}
    for method, study in studies.items():
        lo, hi = ORDER_BANDS[method]
        ok = lo <= study.slope <= hi
        slopes[method] = {"slope": study.slope, "band": [lo, hi], "within_band": ok}
        print(f"{method:7s} {study.slope:7.3f} {f'[{lo}, {hi}]':>12s} "
              f"{'ok' if ok else 'FAIL':>7s}")
    cols_method, cols_m, cols_h, cols_err = [], [], [], []
    for method, study in studies.items():
        for m, h, err in zip(study.refinements, study.step_sizes,
                             study.terminal_errors):
            cols_method.append(method)
            cols_m.append(str(m))
            cols_h.append(_fmt(h))
            cols_err.append(_fmt(err))
    write_csv(csv_path, ("method", "steps", "step_size", "terminal_error"),
              [cols_method, cols_m, cols_h, cols_err])
    manifest = _manifest_base("orders", config, config.steps or 100)
    manifest["diagnostics"] = {"slopes": slopes}
    manifest["outputs"] = {"csv": str(csv_path)}
    write_manifest(manifest_path, manifest)
    print(f"wrote {csv_path}")
    print(f"wrote {manifest_path}")
    return 0


# ------------------------------------------------------------------ main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sicaoc",
        description="SICA HIV/AIDS model simulation and optimal-control toolkit")
    parser.add_argument("--version", action="version",
                        version=f"sicaoc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="integrate the fraction model")
    p_sim.add_argument("--method", required=True,
                       choices=list(FIXED_METHODS) + ["dp45"])
    p_sim.add_argument("--config")
    p_sim.add_argument("--out")
    p_sim.add_argument("--plot", action="store_true")

    p_opt = sub.add_parser("optimize", help="solve the prevention control problem")
    p_opt.add_argument("--config")
    p_opt.add_argument("--out")
    p_opt.add_argument("--plot", action="store_true")
    p_opt.add_argument("--adjoint", choices=list(ADJOINT_MODES))

    p_cmp = sub.add_parser("compare", help="norm tables vs the ode45 baseline")
    p_cmp.add_argument("--config")
    p_cmp.add_argument("--out")

    p_ord = sub.add_parser("orders", help="convergence-order report")
    p_ord.add_argument("--config")
    p_ord.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = load_config(args.config)
        if args.command == "optimize" and args.adjoint:
            config.adjoint_mode = args.adjoint
        if args.command == "simulate":
            return cmd_simulate(config, args.method, args.out, args.plot)
        if args.command == "optimize":
            return cmd_optimize(config, args.out, args.plot)
        if args.command == "compare":
            return cmd_compare(config, args.out)
        return cmd_orders(config, args.out)
    except ConfigError as exc:
        print(f"error: config: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (IntegrationFailure, StepLimitExceeded, SweepNonConvergence) as exc:
        print(f"error: numeric: {_one_line(exc)}", file=sys.stderr)
        return 3
    except (IoFailure, OSError) as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 4


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split())


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
