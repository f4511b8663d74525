"""Seeded ensemble experiments comparing the invariant and plain schemes.

Every experiment integrates both schemes on the same jittered node sets
(one per seed) and scores the final state against the exact solution.
Results are plain dataclasses with CSV writers; the order of rows follows
the configuration, never the order in which jobs finish.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .diffusion_schemes import MeshlessScheme, SchemeConfig, integrate_many
from .errors import MeshlessError
from .exact_solutions import preset
from .geometry import NodeSet, build_perturbed_grid, stencil_plan
from .lsq_stencil import derivative_field

SCHEMES = ("non-invariant", "invariant")

# a run whose final max |u| grows past this multiple of the initial max counts as blown up
BLOWUP_FACTOR = 1e6

DEFAULT_MU_SWEEP = (0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
DEFAULT_R_SWEEP = (0.16, 0.17, 0.18, 0.19, 0.2, 0.21, 0.22, 0.25, 0.3, 0.35, 0.4)
DEFAULT_CONVERGENCE_H = tuple(2.0**-k for k in range(4, 9))


@dataclass(frozen=True)
class ExperimentConfig:
    """Ensemble settings shared by all experiments.

    ``mu_inv=None`` means the invariant weight parameter is matched to
    ``mu_noninv`` by :func:`matched_mu`.
    """

    a: float = 1.0
    b: float = 2.0
    n: int = 40
    jitter_frac: float = 0.1
    dt: float = 1e-3
    n_steps: int = 1000
    seeds: tuple = tuple(range(10))
    r: float = 0.25
    mu_noninv: float = 1.0
    mu_inv: float | None = None
    euler_period: int = 20
    include_center: bool = True
    jitter_boundary: bool = False
    jobs: int | None = None

    @property
    def t_end(self):
        return self.n_steps * self.dt

    def node_sets(self):
        return [
            build_perturbed_grid(self.a, self.b, self.n, self.jitter_frac, s, self.jitter_boundary)
            for s in self.seeds
        ]

    def scheme_config(self, kind, mu, r=None):
        return SchemeConfig(
            r=self.r if r is None else r, mu=mu, dt=self.dt, euler_period=self.euler_period,
            include_center=self.include_center, scheme_kind=kind,
        )


@dataclass
class RealizationResult:
    seed: int
    rmse: float
    converged: bool
    # "setup" errors happen before the first step and are hard errors
    error: str | None = None
    hard_error: bool = False


@dataclass
class ExperimentReport:
    solution: str
    runs: dict
    metadata: dict = field(default_factory=dict)

    @staticmethod
    def _mean(runs):
        vals = [r.rmse for r in runs if r.converged]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def rmse_is(self):
        return self._mean(self.runs["invariant"])

    @property
    def rmse_nis(self):
        return self._mean(self.runs["non-invariant"])

    @property
    def ratio_percent(self):
        return 100.0 * self.rmse_is / self.rmse_nis

    def failures(self, scheme):
        return sum(not r.converged for r in self.runs[scheme])

    @property
    def hard_errors(self):
        return sum(r.hard_error for runs in self.runs.values() for r in runs)


def rmse(numeric, exact):
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if numeric.shape != exact.shape:
        raise ValueError(f"length mismatch: {numeric.shape} vs {exact.shape}")
    if numeric.size == 0:
        raise ValueError("rmse needs at least one value")
    return float(np.sqrt(np.mean((numeric - exact) ** 2)))


def mu_matching(mu_noninv, offsets, inv_offsets):
    """``mu_noninv * median(dx**2) / median(iota(dx)**2)`` over pooled stencil offsets.

    Puts the two weight matrices on the same scale: a typical neighbor gets
    about the same weight in both schemes.
    """
    d2 = np.square(np.asarray(offsets, dtype=float).ravel())
    i2 = np.square(np.asarray(inv_offsets, dtype=float).ravel())
    return float(mu_noninv * np.median(d2) / np.median(i2))


def stencil_offsets(node_sets, solution, r, include_center=True, t=0.0):
    """Pooled plain and invariantized non-center offsets of all interior stencils."""
    plain, inv = [], []
    for nodes in node_sets:
        sch = MeshlessScheme(nodes, SchemeConfig(r=r, scheme_kind="invariant", include_center=include_center))
        eps = sch.frame(solution(t, nodes.positions))
        off = sch.offsets
        ioff = off / ((1 - eps[:, None] * sch.x_j) * (1 - eps * sch.x_c)[:, None])
        keep = sch.plan.mask & (sch.plan.indices != sch.plan.centers[:, None])
        plain.append(off[keep])
        inv.append(ioff[keep])
    return np.concatenate(plain), np.concatenate(inv)


def matched_mu(mu_noninv, node_sets, solution, r, include_center=True):
    return mu_matching(mu_noninv, *stencil_offsets(node_sets, solution, r, include_center))


def _score(result, seed, exact, initial_max):
    if isinstance(result, MeshlessError):
        msg = f"{type(result).__name__}: {result}"
        return RealizationResult(seed, math.nan, False, msg, hard_error=result.step is None)
    u = result.state.curr
    if not np.all(np.isfinite(u)):
        return RealizationResult(seed, math.nan, False, "non-finite values")
    if np.max(np.abs(u)) > BLOWUP_FACTOR * initial_max:
        return RealizationResult(seed, math.nan, False, "blow-up")
    return RealizationResult(seed, rmse(u, exact(result.nodes.positions)), True)


def run_ensemble(cfg, solution, kind, mu, r=None):
    """One scheme on every seed; returns a list of :class:`RealizationResult`."""
    scfg = cfg.scheme_config(kind, mu, r)
    try:
        node_sets = cfg.node_sets()
    except MeshlessError as err:
        return [RealizationResult(s, math.nan, False, f"{type(err).__name__}: {err}", True) for s in cfg.seeds]
    u0 = [solution(0.0, ns.positions) for ns in node_sets]
    plans = []
    for ns in node_sets:
        try:
            plans.append(stencil_plan(ns, scfg.r, scfg.include_center))
        except MeshlessError as err:
            plans.append(err)
    ok = [i for i, p in enumerate(plans) if not isinstance(p, MeshlessError)]
    results = list(plans)
    if ok:
        batch = integrate_many(
            [node_sets[i] for i in ok], [u0[i] for i in ok], solution, cfg.n_steps, scfg,
            plans=[plans[i] for i in ok],
        )
        for i, res in zip(ok, batch):
            results[i] = res
    t_end = cfg.t_end
    return [
        _score(res, seed, lambda x: solution(t_end, x), float(np.max(np.abs(u))))
        for res, seed, u in zip(results, cfg.seeds, u0)
    ]


def _job(args):
    cfg, solution, kind, mu, r = args
    return run_ensemble(cfg, solution, kind, mu, r)


def _run_jobs(jobs, n_workers):
    """Run ensemble jobs, serially or in worker processes; results keep job order."""
    if n_workers is None:
        n_workers = os.cpu_count() or 1
    if n_workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(_job, jobs))


def resolve_mu_inv(cfg, mu_noninv, solution, r=None):
    """Explicit ``mu_inv`` if configured, else the matched value; NaN if matching failed."""
    if cfg.mu_inv is not None:
        return cfg.mu_inv
    try:
        return matched_mu(mu_noninv, cfg.node_sets(), solution, cfg.r if r is None else r, cfg.include_center)
    except MeshlessError:
        return math.nan


def _metadata(cfg, **extra):
    meta = {k: v for k, v in asdict(cfg).items() if k != "jobs"}
    meta["seeds"] = list(cfg.seeds)
    meta.update(extra)
    return meta


def run_table1(cfg=None, solutions=("u1", "u2", "u3"), constants=None):
    """Both schemes on every preset; one :class:`ExperimentReport` per preset.

    ``constants`` optionally maps a preset name to ``{"c1": .., "c2": .., "c3": ..}``.
    """
    cfg = cfg or ExperimentConfig()
    constants = constants or {}
    sols, mus, jobs = [], [], []
    for name in solutions:
        sol = preset(name, **constants.get(name, {})).check_box(cfg.a, cfg.b, cfg.t_end)
        mu_inv = resolve_mu_inv(cfg, cfg.mu_noninv, sol)
        sols.append(sol)
        mus.append(mu_inv)
        jobs += [(cfg, sol, "non-invariant", cfg.mu_noninv, None), (cfg, sol, "invariant", _finite_mu(mu_inv), None)]
    out = _run_jobs(jobs, cfg.jobs)
    reports = []
    for i, (sol, mu_inv) in enumerate(zip(sols, mus)):
        runs = {"non-invariant": out[2 * i], "invariant": out[2 * i + 1]}
        meta = _metadata(cfg, solution=asdict(sol), mu_inv=mu_inv)
        reports.append(ExperimentReport(sol.kind, runs, meta))
    return reports


def _finite_mu(mu):
    # a failed match leaves the invariant runs to report the setup error themselves
    return mu if np.isfinite(mu) else 0.0


@dataclass
class SweepPoint:
    scheme: str
    value: float
    runs: list

    @property
    def converged(self):
        """True only if every realization converged."""
        return all(r.converged for r in self.runs)

    @property
    def rmse(self):
        return ExperimentReport._mean(self.runs)

    @property
    def hard_errors(self):
        return sum(r.hard_error for r in self.runs)


@dataclass
class SweepResult:
    parameter: str
    points: list
    metadata: dict = field(default_factory=dict)

    def series(self, scheme):
        return [p for p in self.points if p.scheme == scheme]

    @property
    def hard_errors(self):
        return sum(p.hard_errors for p in self.points)

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", self.parameter, "rmse", "converged"])
            for p in self.points:
                w.writerow([p.scheme, repr(float(p.value)), repr(p.rmse), int(p.converged)])
        return path


def sweep_mu(mu_values_noninv=DEFAULT_MU_SWEEP, mu_values_inv=None, solution="u1", cfg=None, constants=None):
    """Ensemble RMSE against the weight parameter, one axis per scheme.

    ``mu_values_inv`` defaults to the matched partner of each non-invariant
    value, so entry ``i`` of both series forms a comparable pair.
    """
    cfg = cfg or ExperimentConfig()
    sol = preset(solution, **(constants or {})).check_box(cfg.a, cfg.b, cfg.t_end)
    mu_values_noninv = [float(m) for m in mu_values_noninv]
    if mu_values_inv is None:
        base = replace(cfg, mu_inv=None)
        mu_values_inv = [resolve_mu_inv(base, m, sol) for m in mu_values_noninv]
    mu_values_inv = [float(m) for m in mu_values_inv]
    if len(mu_values_inv) != len(mu_values_noninv):
        raise ValueError("mu_values_inv and mu_values_noninv must have equal length")
    jobs = [(cfg, sol, "non-invariant", m, None) for m in mu_values_noninv]
    jobs += [(cfg, sol, "invariant", _finite_mu(m), None) for m in mu_values_inv]
    out = _run_jobs(jobs, cfg.jobs)
    k = len(mu_values_noninv)
    points = [SweepPoint("non-invariant", m, runs) for m, runs in zip(mu_values_noninv, out[:k])]
    points += [SweepPoint("invariant", m, runs) for m, runs in zip(mu_values_inv, out[k:])]
    return SweepResult("mu", points, _metadata(cfg, solution=asdict(sol)))


def sweep_r(r_values=DEFAULT_R_SWEEP, solution="u1", cfg=None, constants=None):
    """Ensemble RMSE and convergence against the stencil radius.

    The non-invariant scheme uses ``cfg.mu_noninv``; the invariant one uses
    ``cfg.mu_inv`` or the value matched at each radius.
    """
    cfg = cfg or ExperimentConfig()
    sol = preset(solution, **(constants or {})).check_box(cfg.a, cfg.b, cfg.t_end)
    r_values = [float(r) for r in r_values]
    mu_inv = [resolve_mu_inv(cfg, cfg.mu_noninv, sol, r) for r in r_values]
    jobs = [(cfg, sol, "non-invariant", cfg.mu_noninv, r) for r in r_values]
    jobs += [(cfg, sol, "invariant", _finite_mu(m), r) for m, r in zip(mu_inv, r_values)]
    out = _run_jobs(jobs, cfg.jobs)
    k = len(r_values)
    points = [SweepPoint("non-invariant", r, runs) for r, runs in zip(r_values, out[:k])]
    points += [SweepPoint("invariant", r, runs) for r, runs in zip(r_values, out[k:])]
    return SweepResult("r", points, _metadata(cfg, solution=asdict(sol), mu_inv=mu_inv))


@dataclass
class ConvergenceStudy:
    h: np.ndarray
    err_ux: np.ndarray
    err_uxx: np.ndarray

    @staticmethod
    def _slope(h, err):
        return float(np.polyfit(np.log(h), np.log(err), 1)[0])

    @property
    def slope_ux(self):
        return self._slope(self.h, self.err_ux)

    @property
    def slope_uxx(self):
        return self._slope(self.h, self.err_uxx)

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "err_ux", "err_uxx"])
            for row in zip(self.h, self.err_ux, self.err_uxx):
                w.writerow([repr(float(v)) for v in row])
        return path


def _test_field(x):
    return np.exp(np.sin(x)), np.cos(x) * np.exp(np.sin(x)), (np.cos(x) ** 2 - np.sin(x)) * np.exp(np.sin(x))


def convergence_study(h_values=DEFAULT_CONVERGENCE_H, x0=1.0, mu=1.0):
    """Derivative error against spacing on uniform grids with a square (k = 4) fit.

    The stencil is ``x0 + {-h, 0, h, 2h}``: the node next to a left boundary,
    center included, radius ``2.5 h``. Errors are measured at ``x0`` for the
    field ``exp(sin x)``.
    """
    h_values = np.asarray(h_values, dtype=float)
    err_ux, err_uxx = [], []
    for h in h_values:
        x = x0 + h * np.arange(-1, 5)
        nodes = NodeSet(x, None, h, float(x[0]), float(x[-1]))
        u, ux, uxx = _test_field(x)
        plan = stencil_plan(nodes, 2.5 * h, include_center=True)
        if plan.neighborhoods[0].k != 4:
            raise RuntimeError("convergence stencil is not square")
        est = derivative_field(nodes, u, 2.5 * h, mu, plan=plan)[0]
        err_ux.append(abs(est[1] - ux[1]))
        err_uxx.append(abs(est[2] - uxx[1]))
    return ConvergenceStudy(h_values, np.array(err_ux), np.array(err_uxx))


def write_table1_csv(reports, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solution", "scheme", "seed", "rmse", "converged"])
        for rep in reports:
            for scheme in SCHEMES:
                for run in rep.runs[scheme]:
                    w.writerow([rep.solution, scheme, run.seed, repr(run.rmse), int(run.converged)])
    return path


def _fmt(v):
    return "  n/a   " if not np.isfinite(v) else f"{v:.2e}"


def table1_summary(reports):
    """Plain-text table: one row per solution with both ensemble means and their ratio."""
    lines = [
        f"{'solution':<10}{'rmse_nis':>12}{'rmse_is':>12}{'is/nis [%]':>12}{'failed nis/is':>16}",
    ]
    for rep in reports:
        ratio = rep.ratio_percent if np.isfinite(rep.rmse_nis) and rep.rmse_nis > 0 else math.nan
        fails = f"{rep.failures('non-invariant')}/{rep.failures('invariant')}"
        lines.append(
            f"{rep.solution:<10}{_fmt(rep.rmse_nis):>12}{_fmt(rep.rmse_is):>12}"
            f"{('n/a' if not np.isfinite(ratio) else f'{ratio:.1f}'):>12}{fails:>16}"
        )
    if reports:
        meta = reports[0].metadata
        lines.append("")
        lines.append(
            f"N={meta['n']} dt={meta['dt']} steps={meta['n_steps']} seeds={len(meta['seeds'])} "
            f"r={meta['r']} mu_noninv={meta['mu_noninv']}"
        )
        lines.append("mu_inv: " + ", ".join(f"{rep.solution}={rep.metadata['mu_inv']:.4g}" for rep in reports))
    return "\n".join(lines) + "\n"


def sweep_summary(result):
    lines = [f"{'scheme':<15}{result.parameter:>8}{'rmse':>12}{'converged':>11}"]
    for p in result.points:
        lines.append(f"{p.scheme:<15}{p.value:>8.4g}{_fmt(p.rmse):>12}{('yes' if p.converged else 'no'):>11}")
    return "\n".join(lines) + "\n"


def convergence_summary(study):
    lines = [f"{'h':>12}{'err_ux':>12}{'err_uxx':>12}"]
    for h, a, b in zip(study.h, study.err_ux, study.err_uxx):
        lines.append(f"{h:>12.4g}{a:>12.3e}{b:>12.3e}")
    lines.append(f"slope ux: {study.slope_ux:.3f}")
    lines.append(f"slope uxx: {study.slope_uxx:.3f}")
    return "\n".join(lines) + "\n"
