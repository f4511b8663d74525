"""Closed-form solutions of u_t = (u^(-4/3) u_x)_x used as data and references."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain


@dataclass(frozen=True)
class ExactSolution:
    """One of the three closed-form families.

    u1 = (2 c1 x - 3 c1^2 t + c2)^(-3/4)
    u2 = ((x + c1)^2 / (t + c2) + c3 (t + c2)^2)^(-3/4)
    u3 = (c1 x + c2)^(-3)
    """

    kind: str
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        if self.kind not in ("u1", "u2", "u3"):
            raise ValueError(f"unknown solution kind {self.kind!r}")

    def inner(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.kind == "u1":
            return 2 * self.c1 * x - 3 * self.c1**2 * t + self.c2
        if self.kind == "u2":
            s = t + self.c2
            with np.errstate(divide="ignore", invalid="ignore"):
                return (x + self.c1) ** 2 / s + self.c3 * s**2
        return self.c1 * x + self.c2 + 0 * t

    @property
    def exponent(self):
        return -3.0 if self.kind == "u3" else -0.75

    def __call__(self, t, x):
        return eval_solution(self, t, x)

    def check_box(self, a, b, t_end, samples=201):
        """Raise :class:`OutOfDomain` unless positive and finite on ``[a,b] x [0,t_end]``.

        All three inner expressions are monotone in x (u1, u3) or have a
        single interior minimum in x at ``-c1`` (u2), so a dense sample plus
        the corner points settles the sign.
        """
        t = np.linspace(0.0, t_end, samples)
        x = np.linspace(a, b, samples)
        if self.kind == "u2" and a < -self.c1 < b:
            x = np.append(x, -self.c1)
        vals = eval_solution(self, t[:, None], x[None, :])
        if not np.all(np.isfinite(vals) & (vals > 0)):
            raise OutOfDomain(f"{self} not positive and finite on [{a}, {b}] x [0, {t_end}]")
        return self


def eval_solution(sol, t, x):
    w = sol.inner(t, x)
    if sol.kind == "u2":
        s = np.asarray(t, dtype=float) + sol.c2
        if np.any(s <= 0):
            raise OutOfDomain("u2 needs t + c2 > 0")
    if np.any(~(w > 0)):
        raise OutOfDomain(f"inner expression of {sol.kind} not positive")
    return w**sol.exponent


PRESETS = {
    "u1": ExactSolution("u1", c1=0.1, c2=0.1),
    "u2": ExactSolution("u2", c1=0.0, c2=10.0, c3=0.0),
    "u3": ExactSolution("u3", c1=0.1, c2=0.1),
}


def preset(name, **overrides):
    base = PRESETS[name]
    params = {"c1": base.c1, "c2": base.c2, "c3": base.c3}
    params.update({k: v for k, v in overrides.items() if v is not None})
    return ExactSolution(name, **params)


# 4th-order central differences
_D1 = np.array([1, -8, 0, 8, -1]) / 12.0
_D2 = np.array([-1, 16, -30, 16, -1]) / 12.0
_SHIFTS = np.arange(-2, 3)


def pde_residual(func, t, x, h=1e-4):
    """``u_t - (u^(-4/3) u_x)_x`` at points, by 4th-order central differences.

    ``func(t, x)`` must accept arrays. The conservative form is expanded as
    ``u^(-4/3) u_xx - (4/3) u^(-7/3) u_x^2``.
    """
    t = np.asarray(t, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)[..., None]
    shape = np.broadcast_shapes(t.shape[:-1], x.shape[:-1]) + (len(_SHIFTS),)
    u = np.broadcast_to(func(t[..., 0], x[..., 0]), shape[:-1])
    # callables that ignore t or x still come back with full stencil shape
    ux_s = np.broadcast_to(func(t, x + _SHIFTS * h), shape)
    ut_s = np.broadcast_to(func(t + _SHIFTS * h, x), shape)
    ux = ux_s @ _D1 / h
    uxx = ux_s @ _D2 / h**2
    ut = ut_s @ _D1 / h
    return ut - (u ** (-4 / 3) * uxx - 4 / 3 * u ** (-7 / 3) * ux**2)


def verify_pde_residual(sol, sample_points, h=1e-4):
    """Max abs PDE residual of ``sol`` over ``(t, x)`` sample points."""
    pts = np.asarray(sample_points, dtype=float)
    return float(np.max(np.abs(pde_residual(sol, pts[:, 0], pts[:, 1], h))))


def box_samples(a, b, t_end, nt=11, nx=11, margin=1e-3):
    """Grid of ``(t, x)`` pairs covering the box, kept inside by ``margin``."""
    t = np.linspace(margin, t_end - margin, nt)
    x = np.linspace(a + margin, b - margin, nx)
    T, X = np.meshgrid(t, x, indexing="ij")
    return np.column_stack([T.ravel(), X.ravel()])
