"""Command-line entry point: ``invmeshless <command> [flags]``.

Settings come from three layers, later ones winning: built-in defaults, an
optional flat ``key = value`` file given with ``--config``, and command-line
flags. The effective settings are written to ``config.echo`` in the output
directory; feeding that file back with ``--config`` repeats the run.

Exit status: 0 on success (non-converged realizations are reported, not
fatal), 1 if a realization failed before its first step or output could
not be written, 2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .diffusion_schemes import KINDS, integrate
from .errors import MeshlessError
from .exact_solutions import PRESETS, preset

log = logging.getLogger("invmeshless")

COMMANDS = ("table1", "sweep-mu", "sweep-r", "convergence", "single-run")

# solution used when none is configured
DEFAULT_SOLUTION = {"table1": "all", "sweep-mu": "u1", "sweep-r": "u1", "convergence": "u1", "single-run": "u3"}


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"invalid config key '{key}': {message}")


@dataclass
class RunConfig:
    command: str | None = None
    a: float = 1.0
    b: float = 2.0
    n: int = 40
    jitter_frac: float = 0.1
    jitter_boundary: bool = False
    dt: float = 1e-3
    n_steps: int = 1000
    seeds: tuple = tuple(range(10))
    r: float = 0.25
    mu_noninv: float = 1.0
    mu_inv: float | str = "auto"
    euler_period: int = 20
    include_center: bool = True
    solution: str | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    scheme: str = "invariant"
    mu_values: tuple = ex.DEFAULT_MU_SWEEP
    mu_values_inv: tuple | str = "auto"
    r_values: tuple = ex.DEFAULT_R_SWEEP
    h_values: tuple = ex.DEFAULT_CONVERGENCE_H
    trajectory_stride: int = 0
    plots: bool = True
    jobs: int | None = None
    output: str = "out"

    @property
    def solution_name(self):
        return self.solution or DEFAULT_SOLUTION[self.command]

    def experiment_config(self):
        return ex.ExperimentConfig(
            a=self.a, b=self.b, n=self.n, jitter_frac=self.jitter_frac, dt=self.dt, n_steps=self.n_steps,
            seeds=tuple(self.seeds), r=self.r, mu_noninv=self.mu_noninv,
            mu_inv=None if self.mu_inv == "auto" else self.mu_inv, euler_period=self.euler_period,
            include_center=self.include_center, jitter_boundary=self.jitter_boundary, jobs=self.jobs,
        )

    def constants(self):
        return {k: getattr(self, k) for k in ("c1", "c2", "c3") if getattr(self, k) is not None}


FIELDS = {f.name: f for f in fields(RunConfig)}


# ---- value parsing -------------------------------------------------------


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _seeds(text):
    """``0-9`` or ``0,3,5`` or a mix such as ``0-2,7``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _floats(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _floats_or_auto(text):
    return "auto" if str(text).strip() == "auto" else _floats(text)


def _float_or_auto(text):
    return "auto" if str(text).strip() == "auto" else float(text)


def _optional_float(text):
    return None if str(text).strip() in ("", "none") else float(text)


def _optional_int(text):
    return None if str(text).strip() in ("", "none", "auto") else int(text)


def _optional_str(text):
    t = str(text).strip()
    return None if t in ("", "none") else t


PARSERS = {
    "command": _optional_str, "a": float, "b": float, "n": int, "jitter_frac": float,
    "jitter_boundary": _bool, "dt": float, "n_steps": int, "seeds": _seeds, "r": float,
    "mu_noninv": float, "mu_inv": _float_or_auto, "euler_period": int, "include_center": _bool,
    "solution": _optional_str, "c1": _optional_float, "c2": _optional_float, "c3": _optional_float,
    "scheme": str, "mu_values": _floats, "mu_values_inv": _floats_or_auto, "r_values": _floats,
    "h_values": _floats, "trajectory_stride": int, "plots": _bool, "jobs": _optional_int, "output": str,
}


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def parse_value(key, text):
    if key not in PARSERS:
        raise ConfigError(key, "unknown key")
    try:
        return PARSERS[key](text)
    except (TypeError, ValueError) as err:
        raise ConfigError(key, f"cannot parse {text!r} ({err})") from None


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys allowed."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError("config", f"cannot read {path}: {err.strerror}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {num} of {path} is not 'key = value'")
        key, text = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = parse_value(key, text)
    return values


# ---- validation ----------------------------------------------------------


def _require(cond, key, message):
    if not cond:
        raise ConfigError(key, message)


def validate(cfg):
    _require(cfg.command is not None, "command", f"missing; choose one of {', '.join(COMMANDS)}")
    _require(cfg.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    _require(math.isfinite(cfg.a) and math.isfinite(cfg.b), "a", "interval ends must be finite")
    _require(cfg.b > cfg.a, "b", f"need b > a, got a={cfg.a}, b={cfg.b}")
    _require(cfg.n >= 5, "n", f"need n >= 5, got {cfg.n}")
    _require(0 <= cfg.jitter_frac < 0.5, "jitter_frac", f"must lie in [0, 0.5), got {cfg.jitter_frac}")
    _require(cfg.dt >= 0 and math.isfinite(cfg.dt), "dt", f"must be finite and >= 0, got {cfg.dt}")
    _require(cfg.n_steps >= 0, "n_steps", f"must be >= 0, got {cfg.n_steps}")
    _require(len(cfg.seeds) > 0, "seeds", "need at least one seed")
    _require(all(s >= 0 for s in cfg.seeds), "seeds", "seeds must be non-negative")
    _require(cfg.r > 0, "r", f"must be positive, got {cfg.r}")
    _require(cfg.mu_noninv >= 0, "mu_noninv", f"must be >= 0, got {cfg.mu_noninv}")
    _require(cfg.mu_inv == "auto" or cfg.mu_inv >= 0, "mu_inv", f"must be 'auto' or >= 0, got {cfg.mu_inv}")
    _require(cfg.euler_period >= 1, "euler_period", f"must be >= 1, got {cfg.euler_period}")
    sol = cfg.solution_name
    names = ("all",) + tuple(PRESETS) if cfg.command == "table1" else tuple(PRESETS)
    _require(sol in names, "solution", f"must be one of {', '.join(names)}, got {sol!r}")
    _require(not (sol == "all" and cfg.constants()), "c1", "solution constants need a single solution")
    _require(cfg.scheme in KINDS, "scheme", f"must be one of {', '.join(KINDS)}, got {cfg.scheme!r}")
    _require(len(cfg.mu_values) > 0 and min(cfg.mu_values) >= 0, "mu_values", "need non-negative values")
    if cfg.mu_values_inv != "auto":
        _require(len(cfg.mu_values_inv) == len(cfg.mu_values), "mu_values_inv", "must pair up with mu_values")
        _require(min(cfg.mu_values_inv) >= 0, "mu_values_inv", "need non-negative values")
    _require(len(cfg.r_values) > 0 and min(cfg.r_values) > 0, "r_values", "need positive values")
    _require(len(cfg.h_values) >= 2 and min(cfg.h_values) > 0, "h_values", "need at least two positive values")
    _require(cfg.trajectory_stride >= 0, "trajectory_stride", "must be >= 0")
    _require(cfg.jobs is None or cfg.jobs >= 1, "jobs", f"must be >= 1, got {cfg.jobs}")
    if cfg.command != "convergence":
        for name in (PRESETS if sol == "all" else (sol,)):
            try:
                preset(name, **cfg.constants()).check_box(cfg.a, cfg.b, cfg.n_steps * cfg.dt)
            except (MeshlessError, ValueError) as err:
                raise ConfigError("solution", str(err)) from None
    return cfg


# ---- argument parsing ----------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="invmeshless", description=__doc__.split("\n\n")[0])
    p.add_argument("command", nargs="?", choices=COMMANDS, help="experiment to run")
    p.add_argument("--config", help="flat 'key = value' settings file")
    for name in FIELDS:
        if name == "command":
            continue
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar="VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv=None):
    """Defaults, then the config file, then flags; validated :class:`RunConfig`."""
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for name in FIELDS:
        raw = getattr(args, name, None)
        if raw is None:
            continue
        values[name] = raw if name == "command" else parse_value(name, raw)
    cfg = replace(RunConfig(), **values)
    return validate(cfg), args


def echo_config(cfg, path):
    lines = [f"{name} = {_format(getattr(cfg, name))}" for name in FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")
    return path


# ---- commands ------------------------------------------------------------


def _maybe_plot(cfg, fn, *args):
    if not cfg.plots:
        return
    from . import plotting

    getattr(plotting, fn)(*args)


def _run_table1(cfg, out):
    names = tuple(PRESETS) if cfg.solution_name == "all" else (cfg.solution_name,)
    constants = {names[0]: cfg.constants()} if cfg.constants() else None
    reports = ex.run_table1(cfg.experiment_config(), names, constants)
    ex.write_table1_csv(reports, out / "table1.csv")
    summary = ex.table1_summary(reports)
    _maybe_plot(cfg, "plot_table1", reports, out / "table1.png")
    return summary, sum(r.hard_errors for r in reports)


def _run_sweep_mu(cfg, out):
    inv = None if cfg.mu_values_inv == "auto" else cfg.mu_values_inv
    res = ex.sweep_mu(cfg.mu_values, inv, cfg.solution_name, cfg.experiment_config(), cfg.constants())
    res.write_csv(out / "sweep_mu.csv")
    _maybe_plot(cfg, "plot_sweep_mu", res, out / "sweep_mu.png")
    return ex.sweep_summary(res), res.hard_errors


def _run_sweep_r(cfg, out):
    res = ex.sweep_r(cfg.r_values, cfg.solution_name, cfg.experiment_config(), cfg.constants())
    res.write_csv(out / "sweep_r.csv")
    _maybe_plot(cfg, "plot_sweep_r", res, out / "sweep_r.png")
    return ex.sweep_summary(res), res.hard_errors


def _run_convergence(cfg, out):
    study = ex.convergence_study(cfg.h_values, mu=cfg.mu_noninv)
    study.write_csv(out / "convergence.csv")
    _maybe_plot(cfg, "plot_convergence", study, out / "convergence.png")
    return ex.convergence_summary(study), 0


def _run_single(cfg, out):
    ecfg = cfg.experiment_config()
    sol = preset(cfg.solution_name, **cfg.constants())
    seed = cfg.seeds[0]
    nodes = replace(ecfg, seeds=(seed,)).node_sets()[0]
    if cfg.scheme == "invariant":
        mu = ex.resolve_mu_inv(ecfg, cfg.mu_noninv, sol)
    else:
        mu = cfg.mu_noninv
    scfg = ecfg.scheme_config(cfg.scheme, mu)
    stride = cfg.trajectory_stride or None
    head = f"solution={sol.kind} scheme={cfg.scheme} seed={seed} r={cfg.r} mu={mu:.6g}\n"
    try:
        res = integrate(nodes, sol(0.0, nodes.positions), sol, cfg.n_steps, scfg, stride=stride)
    except MeshlessError as err:
        return head + f"run failed: {err}\n", int(err.step is None)
    x = nodes.positions
    u = res.state.curr
    exact = sol(res.state.t, x)
    with (out / "final_state.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "u", "u_exact", "abs_error"])
        for j in range(len(x)):
            w.writerow([j, repr(float(x[j])), repr(float(u[j])), repr(float(exact[j])), repr(float(abs(u[j] - exact[j])))])
    if stride:
        res.write_trajectory(out / "trajectory.csv")
    _maybe_plot(cfg, "plot_final_state", x, u, exact, out / "final_state.png", head.strip())
    err = np.abs(u - exact)
    summary = head + (
        f"t_end={res.state.t!r}\nrmse={ex.rmse(u, exact):.6e}\nmax_abs_error={err.max():.6e}\n"
        f"max_rel_error={np.max(err / np.abs(exact)):.6e}\n"
    )
    return summary, 0


RUNNERS = {
    "table1": _run_table1, "sweep-mu": _run_sweep_mu, "sweep-r": _run_sweep_r,
    "convergence": _run_convergence, "single-run": _run_single,
}


def dispatch(cfg):
    """Run the configured command; returns the exit status."""
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        echo_config(cfg, out / "config.echo")
        summary, hard = RUNNERS[cfg.command](cfg, out)
        (out / "summary.txt").write_text(summary)
    except OSError as err:
        log.error("cannot write output: %s (%s)", err.filename or out, err.strerror)
        return 1
    sys.stdout.write(summary)
    if hard:
        log.error("%d realization(s) failed before time stepping; see the CSV output", hard)
        return 1
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg, args = parse_config(argv)
    except ConfigError as err:
        sys.stderr.write(f"invmeshless: {err}\n")
        return 2
    if args.verbose:
        log.setLevel(logging.INFO)
    log.info("running %s into %s", cfg.command, cfg.output)
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
