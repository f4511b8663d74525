"""Weighted least-squares fit of a cubic Taylor polynomial on a stencil.

For a center node with neighbor offsets ``dx_j`` and values ``u_j`` the
unknowns ``(u, u_x, u_xx, u_xxx)`` solve the normal equations

    (S^T W S) c = S^T W b,    S_j = (1, dx_j, dx_j**2 / 2, dx_j**3 / 6),
    W = diag(exp(-mu * dx_j**2 / r**2)).

Offsets are rescaled by the largest offset magnitude of each stencil before
the 4x4 solve, and the solution is unscaled afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularStencil
from .geometry import stencil_plan

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class TaylorSystem:
    design_matrix: np.ndarray
    weights: np.ndarray
    rhs: np.ndarray
    offsets: np.ndarray
    center: int | None = None


@dataclass(frozen=True)
class DerivativeEstimate:
    u0_fit: float
    ux: float
    uxx: float
    uxxx: float

    def as_array(self):
        return np.array([self.u0_fit, self.ux, self.uxx, self.uxxx])


def taylor_rows(offsets):
    z = np.asarray(offsets, dtype=float)
    z2 = z * z
    return np.stack([np.ones_like(z), z, z2 / 2, z2 * z / 6], axis=-1)


def gaussian_weights(offsets, mu, r):
    z = np.asarray(offsets, dtype=float) / r
    return np.exp(-mu * z * z)


def assemble(neigh, values, mu):
    """Taylor system of ``neigh``; ``values`` is indexed by global node index."""
    values = np.asarray(values, dtype=float)
    return TaylorSystem(
        design_matrix=taylor_rows(neigh.offsets),
        weights=gaussian_weights(neigh.offsets, mu, neigh.radius),
        rhs=values[neigh.neighbor_indices],
        offsets=np.asarray(neigh.offsets, dtype=float),
        center=neigh.center,
    )


def _scaled_normal(offsets, weights):
    scale = np.max(np.abs(offsets), axis=-1)
    scale = np.where(scale > 0, scale, 1.0)
    S = taylor_rows(offsets / scale[..., None])
    SW = S * weights[..., None]
    A = np.swapaxes(SW, -1, -2) @ S
    return A, SW, scale


def _inverse_checked(A, centers):
    """Inverse of each normal matrix, guarded by its 1-norm condition number."""
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        inv = np.full_like(A, np.nan)
    cond = np.abs(A).sum(axis=-2).max(axis=-1) * np.abs(inv).sum(axis=-2).max(axis=-1)
    bad = np.flatnonzero(~(cond < MAX_CONDITION))
    if len(bad):
        i = bad[0]
        node = None if centers is None else int(np.atleast_1d(centers)[i])
        raise SingularStencil(f"normal matrix condition {cond.flat[i]:.3g} exceeds {MAX_CONDITION:g}", node=node)
    return inv


def fit_batch(offsets, weights, values, centers=None):
    """Vectorized weighted fit over leading axes.

    ``offsets``, ``weights`` and ``values`` have shape ``(..., k)``; padded
    entries must carry zero weight. Returns ``(..., 4)`` with columns
    ``u, u_x, u_xx, u_xxx``.
    """
    offsets = np.asarray(offsets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    A, SW, scale = _scaled_normal(offsets, weights)
    inv = _inverse_checked(A, centers)
    rhs = np.einsum("...ki,...k->...i", SW, values)
    c = np.einsum("...ij,...j->...i", inv, rhs)
    return c / scale[..., None] ** np.arange(4)


def fit_operator(offsets, weights, centers=None):
    """Linear map ``(..., 4, k)`` taking stencil values to the fitted derivatives.

    Useful when the stencil geometry and weights are fixed across many fits.
    """
    offsets = np.asarray(offsets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    A, SW, scale = _scaled_normal(offsets, weights)
    op = _inverse_checked(A, centers) @ np.swapaxes(SW, -1, -2)
    return op / (scale[..., None] ** np.arange(4))[..., None]


def solve_weighted_lsq(system):
    c = fit_batch(system.offsets, system.weights, system.rhs, centers=system.center)
    return DerivativeEstimate(*map(float, c))


def residual_norm(system, estimate):
    """``|| W^(1/2) (S c - b) ||`` for a solved system."""
    r = system.design_matrix @ estimate.as_array() - system.rhs
    return float(np.linalg.norm(np.sqrt(system.weights) * r))


def derivative_field(nodes, values, r, mu, include_center=True, plan=None):
    """Fitted ``(u, u_x, u_xx, u_xxx)`` at every interior node, shape ``(n - 2, 4)``."""
    if plan is None:
        plan = stencil_plan(nodes, r, include_center)
    values = np.asarray(values, dtype=float)
    offsets = plan.offsets(nodes.positions)
    weights = np.where(plan.mask, gaussian_weights(offsets, mu, plan.radius), 0.0)
    return fit_batch(offsets, weights, values[plan.indices], centers=plan.centers)
