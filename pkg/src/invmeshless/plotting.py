"""Figures rendered next to the CSV outputs of each CLI command.

The CSV files are the primary output; these PNGs are a convenience view of
the same numbers. Everything uses the non-interactive Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"non-invariant": "tab:blue", "invariant": "tab:red"}

# no software/date stamps, so reruns produce identical files
_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_table1(reports, path):
    """Grouped bars of the ensemble RMSE per solution, log scale."""
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    names = [r.solution for r in reports]
    pos = np.arange(len(names))
    floor = 1e-17
    for k, (scheme, attr) in enumerate([("non-invariant", "rmse_nis"), ("invariant", "rmse_is")]):
        vals = np.array([getattr(r, attr) for r in reports])
        vals = np.where(np.isfinite(vals), np.maximum(vals, floor), np.nan)
        ax.bar(pos + (k - 0.5) * 0.38, vals, 0.38, label=scheme, color=COLORS[scheme])
    ax.set_yscale("log")
    ax.set_xticks(pos, names)
    ax.set_ylabel("ensemble RMSE at final time")
    ax.legend(frameon=False, ncol=2, loc="lower center", bbox_to_anchor=(0.5, 1.0))
    return _save(fig, path)


def _series(result, scheme):
    pts = result.series(scheme)
    x = np.array([p.value for p in pts])
    y = np.array([p.rmse for p in pts])
    ok = np.array([p.converged for p in pts], dtype=bool)
    return x, y, ok


def _mark_failures(ax, x, ok, color):
    if (~ok).any():
        ymax = ax.get_ylim()[1]
        ax.plot(x[~ok], np.full((~ok).sum(), ymax), "x", color=color, clip_on=False, ms=8)


def plot_sweep_mu(result, path):
    """Two x axes: non-invariant mu below, invariant mu above.

    Pair ``i`` of the two series shares a horizontal position. Crosses at the
    top edge mark points where some realization did not converge.
    """
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    xn, yn, okn = _series(result, "non-invariant")
    xi, yi, oki = _series(result, "invariant")
    pos = np.arange(len(xn))
    ax.semilogy(pos, yn, "o-", color=COLORS["non-invariant"], label="non-invariant")
    ax.semilogy(pos, yi, "s-", color=COLORS["invariant"], label="invariant")
    _mark_failures(ax, pos, okn, COLORS["non-invariant"])
    _mark_failures(ax, pos, oki, COLORS["invariant"])
    ax.set_xticks(pos, [f"{v:g}" for v in xn])
    ax.set_xlabel("mu (non-invariant)", color=COLORS["non-invariant"])
    top = ax.secondary_xaxis("top")
    top.set_xticks(pos, [f"{v:.3g}" for v in xi])
    top.set_xlabel("mu (invariant)", color=COLORS["invariant"])
    ax.set_ylabel("ensemble RMSE")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_sweep_r(result, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for scheme, marker in [("non-invariant", "o"), ("invariant", "s")]:
        x, y, ok = _series(result, scheme)
        c = COLORS[scheme]
        ax.semilogy(x, np.where(ok, y, np.nan), marker + "-", color=c, label=scheme)
        ax.semilogy(x[~ok], y[~ok], marker, color=c, mfc="none")
    for scheme in ("non-invariant", "invariant"):
        x, _, ok = _series(result, scheme)
        _mark_failures(ax, x, ok, COLORS[scheme])
    ax.set_xlabel("stencil radius r")
    ax.set_ylabel("ensemble RMSE")
    ax.legend(frameon=False, title="open: partly diverged\ncross: not converged", title_fontsize=7)
    return _save(fig, path)


def plot_convergence(study, path):
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    h = study.h
    ax.loglog(h, study.err_ux, "o-", label=f"u_x (slope {study.slope_ux:.2f})")
    ax.loglog(h, study.err_uxx, "s-", label=f"u_xx (slope {study.slope_uxx:.2f})")
    for order, err in [(3, study.err_ux), (2, study.err_uxx)]:
        ax.loglog(h, err[0] * (h / h[0]) ** order, "k:", lw=0.8)
    ax.set_xlabel("h")
    ax.set_ylabel("abs error at center")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_final_state(x, numeric, exact, path, title=""):
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(5.5, 4.8), sharex=True)
    top.plot(x, exact, "k-", lw=1, label="exact")
    top.plot(x, numeric, ".", label="numeric")
    top.set_ylabel("u")
    top.legend(frameon=False)
    if title:
        top.set_title(title)
    bottom.plot(x, np.asarray(numeric) - np.asarray(exact), ".-")
    bottom.set_xlabel("x")
    bottom.set_ylabel("numeric - exact")
    return _save(fig, path)
