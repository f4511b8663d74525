"""Explicit meshless integrators for u_t = (u^(-4/3) u_x)_x.

Two spatial discretizations share the same time stepping:

* ``non-invariant``: meshless derivatives of the nodal data.
* ``invariant``: at each node the data are first mapped by the inversion
  ``x -> x / (1 - e5 x)``, ``u -> (1 - e5 x)^3 u`` with ``e5`` from the
  discrete frame, the step is taken in those coordinates, and the new value
  is mapped back.

Time stepping is leapfrog with an Euler step at steps 1, 1 + P, 1 + 2P, ...
(``P = euler_period``) to damp the leapfrog computational mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import MeshlessError, NonPositiveU
from .geometry import stack_nodes, stencil_plan
from .lie_symmetry import frame_batch, invariant_offsets
from .lsq_stencil import fit_batch, fit_operator, gaussian_weights

KINDS = ("invariant", "non-invariant")


@dataclass(frozen=True)
class SchemeConfig:
    r: float
    mu: float = 1.0
    dt: float = 1e-3
    euler_period: int = 20
    include_center: bool = True
    scheme_kind: str = "invariant"

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.euler_period < 1:
            raise ValueError(f"euler_period must be >= 1, got {self.euler_period}")
        if self.scheme_kind not in KINDS:
            raise ValueError(f"scheme_kind must be one of {KINDS}, got {self.scheme_kind!r}")


@dataclass
class SchemeState:
    prev: np.ndarray | None
    curr: np.ndarray
    t: float = 0.0
    step: int = 0
    dt: float = 1e-3


def rhs(u, ux, uxx):
    """Right-hand side ``-(4/3) u^(-7/3) u_x^2 + u^(-4/3) u_xx``."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        bad = int(np.flatnonzero(~(np.atleast_1d(u) > 0))[0])
        raise NonPositiveU(f"u must be positive in the diffusion term, got {np.atleast_1d(u)[bad]}", node=bad)
    v = 1.0 / np.cbrt(u)
    v4 = v * v * v * v
    return v4 * (uxx - 4.0 / 3.0 * v * v * v * ux * ux)


class MeshlessScheme:
    """Spatial operator of one scheme on a fixed node set.

    ``plan`` fixes the neighborhoods; pass the plan of another node set to
    keep the stencil connectivity identical across transformed copies.
    """

    def __init__(self, nodes, config, plan=None):
        self.nodes = nodes
        self.config = config
        self.plan = plan if plan is not None else stencil_plan(nodes, config.r, config.include_center)
        x = nodes.positions
        p = self.plan
        self.x_c = x[p.centers]
        self.x_l = x[p.left]
        self.x_r = x[p.right]
        self.x_j = np.where(p.mask, x[p.indices], self.x_c[:, None])
        self.offsets = p.offsets(x)
        if config.scheme_kind == "non-invariant":
            w = np.where(p.mask, gaussian_weights(self.offsets, config.mu, config.r), 0.0)
            self._op = fit_operator(self.offsets, w, centers=p.centers)

    def frame(self, u):
        p = self.plan
        return frame_batch(
            self.x_l, u[p.left], self.x_c, u[p.centers], self.x_r, u[p.right],
            self.x_j, p.mask, centers=p.centers,
        )

    def derivatives(self, u):
        """``(u_c, u_x, u_xx, factor)`` in the scheme's working coordinates.

        ``factor`` maps a nodal value to working coordinates (``(1-e5 x)^3``
        for the invariant scheme, 1 otherwise).
        """
        u = np.asarray(u, dtype=float)
        p = self.plan
        if self.config.scheme_kind == "non-invariant":
            d = np.einsum("mik,mk->mi", self._op, u[p.indices])
            return u[p.centers], d[:, 1], d[:, 2], np.ones_like(self.x_c)
        eps = self.frame(u)
        den_j = 1.0 - eps[:, None] * self.x_j
        den_c = 1.0 - eps * self.x_c
        off = invariant_offsets(eps[:, None], self.x_c[:, None], self.x_j)
        w = np.where(p.mask, gaussian_weights(off, self.config.mu, self.config.r), 0.0)
        d = fit_batch(off, w, den_j * den_j * den_j * u[p.indices], centers=p.centers)
        factor = den_c * den_c * den_c
        return factor * u[p.centers], d[:, 1], d[:, 2], factor

    def tendency(self, u):
        """``(rhs, factor)`` at interior nodes for the current level ``u``."""
        uc, ux, uxx, factor = self.derivatives(u)
        try:
            f = rhs(uc, ux, uxx)
        except NonPositiveU as err:
            err.node = int(self.plan.centers[err.node])
            raise
        return f, factor

    def advance(self, base, u, dt, leapfrog):
        """New interior values ``base + c dt rhs(u)`` with ``c = 2`` for leapfrog."""
        f, factor = self.tendency(u)
        c = 2.0 if leapfrog else 1.0
        centers = self.plan.centers
        new = (factor * base[centers] + c * dt * f) / factor
        bad = np.flatnonzero(~(np.isfinite(new) & (new > 0)))
        if len(bad):
            raise NonPositiveU(f"step produced u={new[bad[0]]:.6g}", node=int(centers[bad[0]]))
        return new


def _boundary_values(nodes, boundary, t):
    return np.asarray(boundary(t, nodes.positions[nodes.boundary_indices]), dtype=float)


def _step(scheme, state, boundary, leapfrog):
    if leapfrog and state.prev is None:
        raise ValueError("leapfrog step needs a previous level")
    base = state.prev if leapfrog else state.curr
    new = np.empty_like(state.curr)
    new[scheme.plan.centers] = scheme.advance(base, state.curr, state.dt, leapfrog)
    new[scheme.nodes.boundary_indices] = _boundary_values(scheme.nodes, boundary, state.t + state.dt)
    return new


def _scheme(kind, config, nodes, plan):
    if config.scheme_kind != kind:
        config = replace(config, scheme_kind=kind)
    return MeshlessScheme(nodes, config, plan)


def euler_step_noninv(state, config, nodes, boundary, plan=None):
    return _step(_scheme("non-invariant", config, nodes, plan), state, boundary, leapfrog=False)


def leapfrog_step_noninv(state, config, nodes, boundary, plan=None):
    return _step(_scheme("non-invariant", config, nodes, plan), state, boundary, leapfrog=True)


def euler_step_inv(state, config, nodes, boundary, plan=None):
    return _step(_scheme("invariant", config, nodes, plan), state, boundary, leapfrog=False)


def leapfrog_step_inv(state, config, nodes, boundary, plan=None):
    return _step(_scheme("invariant", config, nodes, plan), state, boundary, leapfrog=True)


def is_euler_step(step, euler_period):
    """Steps are 1-indexed; Euler at 1, 1 + P, 1 + 2P, ..."""
    return (step - 1) % euler_period == 0


@dataclass
class IntegrationResult:
    state: SchemeState
    nodes: object
    trajectory: list = field(default_factory=list)

    def write_trajectory(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "x", "u"])
            for step, t, u in self.trajectory:
                for x, v in zip(self.nodes.positions, u):
                    w.writerow([step, repr(t), repr(float(x)), repr(float(v))])
        return path


def _march(scheme, state, boundary, n_steps, t0, stride=None, traj=None):
    """Advance ``state`` in place up to step ``n_steps``; errors carry the step index."""
    dt = state.dt
    for s in range(state.step + 1, n_steps + 1):
        euler = is_euler_step(s, scheme.config.euler_period)
        try:
            new = _step(scheme, state, boundary, leapfrog=not euler)
        except MeshlessError as err:
            raise err.at_step(s)
        state.prev, state.curr = state.curr, new
        state.step = s
        state.t = t0 + s * dt
        if stride and (s % stride == 0 or s == n_steps):
            traj.append((s, state.t, new.copy()))
    return state


def _check_initial(u0):
    u0 = np.array(u0, dtype=float)
    if np.any(~(u0 > 0)):
        raise NonPositiveU("initial values must be positive")
    return u0


def integrate(nodes, initial_values, boundary, n_steps, config, t0=0.0, plan=None, stride=None):
    """Run ``n_steps`` steps from ``initial_values`` at time ``t0``.

    ``boundary(t, x)`` supplies Dirichlet values at the two end nodes.
    ``stride`` records every ``stride``-th level (plus the first and last) in
    the returned trajectory. A step failure re-raises with the step index set;
    setup failures (stencils, singular fits) leave it unset.
    """
    u0 = _check_initial(initial_values)
    scheme = MeshlessScheme(nodes, config, plan)
    state = SchemeState(prev=None, curr=u0, t=float(t0), step=0, dt=config.dt)
    traj = [(0, state.t, u0.copy())] if stride else []
    _march(scheme, state, boundary, n_steps, t0, stride, traj)
    return IntegrationResult(state, nodes, traj)


def integrate_many(node_sets, initial_values, boundary, n_steps, config, t0=0.0, plans=None):
    """Integrate an ensemble; returns one :class:`IntegrationResult` or exception per member.

    Members advance together in one flat batch. When a step fails, the
    offending member is recorded as failed and dropped, and the others
    resume from the failed step. Members are independent, so each result
    matches what :func:`integrate` gives for that member alone.
    """
    node_sets = list(node_sets)
    plans = [None] * len(node_sets) if plans is None else list(plans)
    out = [None] * len(node_sets)
    curr, live = {}, []
    for i, (ns, u0) in enumerate(zip(node_sets, initial_values)):
        try:
            curr[i] = _check_initial(u0)
            if plans[i] is None:
                plans[i] = stencil_plan(ns, config.r, config.include_center)
            live.append(i)
        except MeshlessError as err:
            out[i] = err
    prev, done = None, 0
    while live:
        batch, plan = stack_nodes([node_sets[i] for i in live], config.r, config.include_center,
                                  [plans[i] for i in live])
        state = SchemeState(
            prev=None if prev is None else np.concatenate([prev[i] for i in live]),
            curr=np.concatenate([curr[i] for i in live]),
            t=t0 + done * config.dt, step=done, dt=config.dt,
        )
        try:
            scheme = MeshlessScheme(batch, config, plan)
            _march(scheme, state, boundary, n_steps, t0)
        except MeshlessError as err:
            if err.node is None:
                # cannot tell which member failed: fall back to one run each
                for i in live:
                    try:
                        out[i] = integrate(node_sets[i], initial_values[i], boundary, n_steps, config, t0, plans[i])
                    except MeshlessError as e:
                        out[i] = e
                break
            member = int(np.searchsorted(batch.starts, err.node, side="right")) - 1
            bad = live[member]
            local = err.node - batch.starts[member]
            err.node = int(local)
            err.args = (err._render(),)
            out[bad] = err
            done = state.step
            if state.prev is not None:
                prev = dict(zip(live, batch.split(state.prev)))
            curr = dict(zip(live, batch.split(state.curr)))
            live.remove(bad)
            continue
        prevs = batch.split(state.prev) if state.prev is not None else [None] * len(live)
        for i, p, c in zip(live, prevs, batch.split(state.curr)):
            out[i] = IntegrationResult(SchemeState(p, c, state.t, state.step, state.dt), node_sets[i])
        break
    return out
