"""Symmetry group of u_t = (u^(-4/3) u_x)_x and its moving frames.

The five-parameter group acts on (t, x, u) as

    T = exp(2 e3) (t + e1)
    X = exp(e3 + 2 e4) (x / (1 - e5 x) + e2)
    U = exp(-3 e4) (1 - e5 x)**3 u

Only the inversion parameter ``e5`` breaks the plain meshless scheme, so the
discrete (product) frame computes ``e5`` alone, node by node, from the
requirement that the centered difference of the transformed data vanishes.
That requirement is the cubic in ``e5`` built by :func:`cubic_coefficients`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FrameUndefined, NoAdmissibleRoot, PoleHit

POLE_RTOL = 1e-6
IMAG_RTOL = 1e-10


@dataclass(frozen=True)
class GroupElement:
    eps1: float = 0.0
    eps2: float = 0.0
    eps3: float = 0.0
    eps4: float = 0.0
    eps5: float = 0.0

    @classmethod
    def inversion(cls, a):
        return cls(eps5=a)

    @property
    def time_factor(self):
        """Factor by which time differences scale."""
        return math.exp(2 * self.eps3)

    @property
    def length_factor(self):
        """Factor by which x differences scale when ``eps5 == 0``."""
        return math.exp(self.eps3 + 2 * self.eps4)


def apply_group(g, t, x, u):
    """Transform ``(t, x, u)`` by ``g``; arrays broadcast."""
    x = np.asarray(x, dtype=float)
    den = 1.0 - g.eps5 * x
    if np.any(den == 0):
        raise PoleHit(f"1 - eps5*x vanishes for eps5={g.eps5:g}")
    T = math.exp(2 * g.eps3) * (np.asarray(t, dtype=float) + g.eps1)
    X = math.exp(g.eps3 + 2 * g.eps4) * (x / den + g.eps2)
    U = math.exp(-3 * g.eps4) * den**3 * np.asarray(u, dtype=float)
    return T, X, U


def apply_group_jet(g, t, x, u, u_t, u_x):
    """First prolongation: transformed ``(T, X, U, U_T, U_X)``."""
    T, X, U = apply_group(g, t, x, u)
    den = 1.0 - g.eps5 * x
    U_T = math.exp(-3 * g.eps4 - 2 * g.eps3) * den**3 * u_t
    U_X = math.exp(-5 * g.eps4 - g.eps3) * den**4 * (den * u_x - 3 * g.eps5 * u)
    return T, X, U, U_T, U_X


def compose_check(pairs, point):
    """Compare sequential one-parameter actions with the composed parameter.

    ``pairs`` is a list of ``(name, a, b)`` where ``name`` is one of ``eps1``
    ... ``eps5``; each subgroup is additive in its parameter. Returns one
    record per pair with the max abs discrepancy.
    """
    t, x, u = point
    out = []
    for name, a, b in pairs:
        ga, gb, gab = (GroupElement(**{name: v}) for v in (a, b, a + b))
        seq = apply_group(ga, *apply_group(gb, t, x, u))
        direct = apply_group(gab, t, x, u)
        err = max(float(np.max(np.abs(np.subtract(s, d)))) for s, d in zip(seq, direct))
        out.append({"param": name, "a": a, "b": b, "max_abs_diff": err})
    return out


def continuous_frame(t, x, u, u_t, u_x):
    """Moving frame on the first jet space.

    Normalizes ``t = 0, x = 0, u = 1, u_t = 1, u_x = 0``.
    """
    if not u > 0:
        raise FrameUndefined(f"u must be positive, got {u}")
    if not u_t / u > 0:
        raise FrameUndefined("u_t / u must be positive")
    if u_x == 0:
        raise FrameUndefined("u_x must be nonzero")
    den = x * u_x + 3 * u
    if not den > 0:
        raise FrameUndefined("x u_x + 3 u must be positive")
    return GroupElement(
        eps1=-t,
        eps2=-(x * x * u_x + 3 * x * u) / (3 * u),
        eps3=0.5 * math.log(u_t / u),
        eps4=math.log(3 * u ** (4 / 3) / den),
        eps5=u_x / den,
    )


def cubic_coefficients(x_l, u_l, x_r, u_r):
    """Coefficients ``(a3, a2, a1, a0)`` of the cubic for ``e5``.

    Its roots make ``(1 - e5 x_r)**3 u_r - (1 - e5 x_l)**3 u_l`` vanish.
    """
    h = np.subtract(x_r, x_l)
    xr2, xl2 = x_r * x_r, x_l * x_l
    a3 = (u_r * xr2 * x_r - u_l * xl2 * x_l) / h
    a2 = -3 * (u_r * xr2 - u_l * xl2) / h
    a1 = 3 * (u_r * x_r - u_l * x_l) / h
    a0 = -(u_r - u_l) / h
    return a3, a2, a1, a0


def _polyval(c, z):
    a3, a2, a1, a0 = c
    return ((a3 * z + a2) * z + a1) * z + a0


def _polyder(c, z):
    a3, a2, a1, _ = c
    return (3 * a3 * z + 2 * a2) * z + a1


def _one_real(p, q, disc):
    A = -np.copysign(np.cbrt(np.abs(q) / 2 + np.sqrt(disc)), q)
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.where(A != 0, -p / (3 * A), 0.0)
    re = -(A + B) / 2
    im = math.sqrt(3) / 2 * (A - B)
    return np.stack([A + B + 0j, re + 1j * im, re - 1j * im], axis=-1)


def _three_real(p, q):
    m = 2 * np.sqrt(-p / 3)
    theta = np.arccos(np.clip(3 * q / (p * m), -1.0, 1.0)) / 3
    k = 2 * np.pi / 3 * np.arange(3)
    return (m[..., None] * np.cos(theta[..., None] - k)).astype(complex)


def _monic_roots(b, c, d):
    """Closed-form roots of ``z**3 + b z**2 + c z + d`` (1-D arrays, real coeffs)."""
    shift = b / 3
    p = c - b * b / 3
    # integer powers written out: pow() of negative arrays is slow
    q = 2 * b * b * b / 27 - b * c / 3 + d
    p3 = p / 3
    disc = q * q / 4 + p3 * p3 * p3
    one = disc >= 0
    if one.all():
        roots = _one_real(p, q, disc)
    elif not one.any():
        roots = _three_real(p, q)
    else:
        roots = np.empty(b.shape + (3,), dtype=complex)
        roots[one] = _one_real(p[one], q[one], disc[one])
        roots[~one] = _three_real(p[~one], q[~one])
    return roots - shift[..., None]


def _newton_polish(c, z, steps):
    """Damped Newton: full step if it lowers |p|, else half step, else keep."""
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(steps):
            pz = _polyval(c, z)
            step = pz / _polyder(c, z)
            apz = np.abs(pz)
            full = z - step
            better = np.abs(_polyval(c, full)) < apz
            # steps at roundoff level are not worth damping
            retry = ~better & (np.abs(step) > 1e-14 * np.abs(z))
            if retry.any():
                half = z - 0.5 * step
                ok = retry & (np.abs(_polyval(c, half)) < apz)
                full = np.where(ok, half, full)
                better |= ok
            z = np.where(better, full, z)
    return z


def solve_cubic(a3, a2, a1, a0, polish_steps=2):
    """All roots of ``a3 z**3 + a2 z**2 + a1 z + a0`` with residuals.

    Works elementwise on arrays. Cardano's formula (trigonometric form when
    all three roots are real) gives the starting values; each root then gets
    up to ``polish_steps`` damped Newton steps. A vanishing leading
    coefficient falls back to the quadratic or linear formula; roots that do
    not exist are NaN.

    Returns ``(roots, residuals)``, shapes ``(..., 3)``.
    """
    a3, a2, a1, a0 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (a3, a2, a1, a0)))
    shape = a3.shape
    a3, a2, a1, a0 = (np.atleast_1d(a).ravel() for a in (a3, a2, a1, a0))
    roots = np.full(a3.shape + (3,), np.nan + 0j)

    cub = a3 != 0
    if cub.all():
        roots = _monic_roots(a2 / a3, a1 / a3, a0 / a3)
    elif cub.any():
        roots[cub] = _monic_roots(a2[cub] / a3[cub], a1[cub] / a3[cub], a0[cub] / a3[cub])

    quad = ~cub & (a2 != 0)
    if quad.any():
        disc = (a1[quad] ** 2 - 4 * a2[quad] * a0[quad]).astype(complex)
        sq = np.sqrt(disc)
        # avoid cancellation: pick the sign matching a1
        sgn = np.where(a1[quad] >= 0, 1.0, -1.0)
        w = -(a1[quad] + sgn * sq) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = w / a2[quad]
            r2 = np.where(w != 0, a0[quad] / np.where(w != 0, w, 1.0), 0.0)
        roots[quad, 0] = r1
        roots[quad, 1] = r2

    lin = ~cub & ~quad & (a1 != 0)
    if lin.any():
        roots[lin, 0] = -a0[lin] / a1[lin]

    c = tuple(a[:, None] for a in (a3, a2, a1, a0))
    roots = _newton_polish(c, roots, polish_steps)
    residuals = np.abs(_polyval(c, roots))
    return roots.reshape(shape + (3,)), residuals.reshape(shape + (3,))


def real_roots(roots):
    """Real parts of the (numerically) real roots, NaN elsewhere."""
    roots = np.asarray(roots)
    real = np.isfinite(roots) & (np.abs(roots.imag) <= IMAG_RTOL * np.maximum(1.0, np.abs(roots.real)))
    return np.where(real, roots.real, np.nan)


def frame_predictor(x_l, u_l, x_c, u_c, x_r, u_r):
    """Continuous-frame ``e5`` evaluated with the centered difference slope."""
    ux = (u_r - u_l) / (x_r - x_l)
    return ux / (x_c * ux + 3 * u_c)


def admissible(eps, stencil_x, mask=None):
    """True where ``1 - eps x_j`` stays positive and away from zero on the stencil."""
    eps = np.asarray(eps, dtype=float)[..., None]
    stencil_x = np.asarray(stencil_x, dtype=float)
    if eps.ndim == stencil_x.ndim + 1:
        stencil_x = stencil_x[..., None, :]
    ex = eps * stencil_x
    den = 1.0 - ex
    if mask is not None:
        m = np.asarray(mask)
        if m.ndim < den.ndim:
            m = m[..., None, :]
        den = np.where(m, den, np.inf)
        ex = np.where(m, ex, 0.0)
    tol = POLE_RTOL * np.max(np.abs(ex), axis=-1)
    return np.min(den, axis=-1) > tol


def select_root(roots, predictor, stencil_x, mask=None):
    """Pick the admissible real root nearest to ``predictor``; NaN if none."""
    cand = real_roots(roots)
    real = np.isfinite(cand)
    if np.all(real.sum(axis=-1) == 1):
        # usual case: a single real root per row
        chosen = np.nanmax(cand, axis=-1)
        return np.where(admissible(chosen, stencil_x, mask), chosen, np.nan)
    ok = real & admissible(np.where(real, cand, 0.0), stencil_x, mask)
    dist = np.where(ok, np.abs(cand - np.asarray(predictor)[..., None]), np.inf)
    best = np.argmin(dist, axis=-1)
    chosen = np.take_along_axis(cand, best[..., None], axis=-1)[..., 0]
    return np.where(np.any(ok, axis=-1), chosen, np.nan)


@dataclass(frozen=True)
class DiscreteFrame:
    eps5: float
    poles: np.ndarray
    roots: np.ndarray

    @property
    def discarded(self):
        """Roots other than the selected one."""
        d = np.abs(self.roots - self.eps5)
        return np.delete(self.roots, int(np.argmin(d)))


def discrete_frame(x_l, u_l, x_c, x_r, u_r, stencil_positions, u_c=None):
    """Product-frame ``e5`` at one node from its flanking neighbors.

    ``u_c`` feeds the tie-break predictor; when omitted it is linearly
    interpolated from the flanking values.
    """
    if not (u_l > 0 and u_r > 0):
        raise FrameUndefined("flanking values must be positive")
    if u_c is None:
        u_c = u_l + (u_r - u_l) * (x_c - x_l) / (x_r - x_l)
    coeffs = cubic_coefficients(x_l, u_l, x_r, u_r)
    roots, _ = solve_cubic(*coeffs)
    stencil = np.asarray(stencil_positions, dtype=float)
    pred = frame_predictor(x_l, u_l, x_c, u_c, x_r, u_r)
    eps = float(select_root(roots, pred, stencil))
    if not np.isfinite(eps):
        raise NoAdmissibleRoot(f"no admissible real root among {roots}")
    with np.errstate(divide="ignore"):
        poles = 1.0 / stencil
    return DiscreteFrame(eps, poles, roots)


def frame_batch(x_l, u_l, x_c, u_c, x_r, u_r, stencil_x, mask=None, centers=None):
    """Vectorized :func:`discrete_frame`; returns ``e5`` per row."""
    nonpos = np.flatnonzero(~((u_l > 0) & (u_r > 0)))
    if len(nonpos):
        node = None if centers is None else int(centers[nonpos[0]])
        raise FrameUndefined("flanking values must be positive", node=node)
    roots, _ = solve_cubic(*cubic_coefficients(x_l, u_l, x_r, u_r))
    pred = frame_predictor(x_l, u_l, x_c, u_c, x_r, u_r)
    eps = select_root(roots, pred, stencil_x, mask)
    bad = np.flatnonzero(~np.isfinite(eps))
    if len(bad):
        node = None if centers is None else int(centers[bad[0]])
        raise NoAdmissibleRoot("every real root of the frame cubic hits a pole", node=node)
    return eps


@dataclass(frozen=True)
class InvariantStencil:
    offsets: np.ndarray
    values: np.ndarray
    u: float
    u_hat: float | None
    u_check: float | None


def invariantize_point(eps, x, u):
    den = 1.0 - eps * np.asarray(x, dtype=float)
    return x / den, den**3 * u


def invariant_offsets(eps, x_c, x_j):
    """``iota(x_j) - iota(x_c)`` in the cancellation-free product form."""
    return (x_j - x_c) / ((1.0 - eps * x_j) * (1.0 - eps * x_c))


def invariantize_stencil(frame, x_c, neigh, values, u_c, u_hat=None, u_check=None):
    eps = frame.eps5 if isinstance(frame, DiscreteFrame) else float(frame)
    x_j = x_c + np.asarray(neigh.offsets, dtype=float)
    if not admissible(eps, np.append(x_j, x_c)):
        raise PoleHit(f"frame eps5={eps:g} not admissible on stencil", node=neigh.center)
    den_c = (1.0 - eps * x_c) ** 3
    vals = np.asarray(values, dtype=float)[neigh.neighbor_indices]
    return InvariantStencil(
        offsets=invariant_offsets(eps, x_c, x_j),
        values=(1.0 - eps * x_j) ** 3 * vals,
        u=den_c * u_c,
        u_hat=None if u_hat is None else den_c * u_hat,
        u_check=None if u_check is None else den_c * u_check,
    )
