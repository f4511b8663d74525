"""Scattered 1-D node sets and radius-based neighbor queries."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateGrid, InsufficientStencil

#: number of unknowns of the cubic Taylor fit; a stencil needs at least this many rows
MIN_STENCIL = 4

# a regenerated grid draws from seed + REGEN_OFFSET; only one retry is made
REGEN_OFFSET = 1_000_003


@dataclass(frozen=True)
class NodeSet:
    positions: np.ndarray
    seed: int | None
    base_spacing: float
    a: float
    b: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self):
        return len(self.positions)

    @property
    def left_boundary(self):
        return 0

    @property
    def right_boundary(self):
        return self.n - 1

    @property
    def boundary_indices(self):
        return np.array([0, self.n - 1])

    @property
    def interior_indices(self):
        return np.arange(1, self.n - 1)

    def is_boundary(self, index):
        return index in (0, self.n - 1)

    def with_positions(self, positions):
        """Same node set (seed, spacing metadata) carried to new coordinates."""
        positions = np.asarray(positions, dtype=float)
        return NodeSet(positions, self.seed, self.base_spacing, float(positions[0]), float(positions[-1]))

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "x", "is_boundary"])
            for j, x in enumerate(self.positions):
                writer.writerow([j, repr(float(x)), int(self.is_boundary(j))])
        return path

    @classmethod
    def from_csv(cls, path, seed=None):
        with Path(path).open() as fh:
            rows = list(csv.DictReader(fh))
        pos = np.array([float(r["x"]) for r in rows])
        spacing = (pos[-1] - pos[0]) / (len(pos) - 1)
        return cls(pos, seed, spacing, float(pos[0]), float(pos[-1]))


@dataclass(frozen=True)
class Neighborhood:
    center: int
    neighbor_indices: np.ndarray
    offsets: np.ndarray
    radius: float

    @property
    def k(self):
        return len(self.neighbor_indices)


def _jittered(a, b, n, jitter_frac, seed, jitter_boundary):
    base = np.linspace(a, b, n)
    dx = (b - a) / (n - 1)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shift = rng.normal(0.0, jitter_frac * dx, size=n)
    if not jitter_boundary:
        shift[0] = shift[-1] = 0.0
    pos = np.sort(base + shift)
    return pos


def _valid(pos, a, b, jitter_boundary):
    if np.any(np.diff(pos) <= 0):
        return False
    if jitter_boundary:
        return True
    return pos[0] == a and pos[-1] == b and np.all((pos[1:-1] > a) & (pos[1:-1] < b))


def build_perturbed_grid(a, b, n, jitter_frac=0.1, seed=0, jitter_boundary=False):
    """Uniform grid on ``[a, b]`` with Gaussian jitter of std ``jitter_frac * dx``.

    Endpoints stay fixed unless ``jitter_boundary`` is set. A grid with
    coincident or escaped nodes is regenerated once from ``seed + REGEN_OFFSET``
    before :class:`DegenerateGrid` is raised.
    """
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")
    if n < 5:
        raise ValueError(f"need n >= 5, got {n}")
    if not 0 <= jitter_frac < 0.5:
        raise ValueError(f"jitter_frac must lie in [0, 0.5), got {jitter_frac}")
    dx = (b - a) / (n - 1)
    for s in (seed, seed + REGEN_OFFSET):
        pos = _jittered(a, b, n, jitter_frac, s, jitter_boundary)
        if _valid(pos, a, b, jitter_boundary):
            return NodeSet(pos, seed, dx, float(pos[0]), float(pos[-1]))
    raise DegenerateGrid(f"jittered grid degenerate after one regeneration (seed={seed})")


def _check_interior(nodes, center):
    if not 0 < center < nodes.n - 1:
        raise ValueError(f"node {center} is not an interior node")


def find_neighbors(nodes, center, r, include_center=True):
    _check_interior(nodes, center)
    x = nodes.positions
    d = x - x[center]
    mask = np.abs(d) <= r
    if not include_center:
        mask[center] = False
    idx = np.flatnonzero(mask)
    if len(idx) < MIN_STENCIL:
        raise InsufficientStencil(f"only {len(idx)} nodes within r={r:g}", node=center)
    return Neighborhood(center, idx, d[idx], float(r))


def nearest_flanking(nodes, center):
    _check_interior(nodes, center)
    return center - 1, center + 1


@dataclass(frozen=True)
class StencilPlan:
    """All interior neighborhoods of a node set, padded to a common width.

    Row ``i`` belongs to node ``centers[i]``; ``mask`` marks the real entries of
    ``indices`` (padding points at the center node and carries zero weight).
    """

    centers: np.ndarray
    indices: np.ndarray
    mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    radius: float
    include_center: bool = True
    neighborhoods: tuple = field(default=(), repr=False)

    def offsets(self, positions):
        x = np.asarray(positions)
        return np.where(self.mask, x[self.indices] - x[self.centers][:, None], 0.0)


def stencil_plan(nodes, r, include_center=True):
    """Neighborhoods of every interior node; raises if any has too few nodes."""
    hoods = tuple(find_neighbors(nodes, c, r, include_center) for c in nodes.interior_indices)
    width = max(h.k for h in hoods)
    centers = nodes.interior_indices.copy()
    indices = np.repeat(centers[:, None], width, axis=1)
    mask = np.zeros((len(hoods), width), dtype=bool)
    for i, h in enumerate(hoods):
        indices[i, : h.k] = h.neighbor_indices
        mask[i, : h.k] = True
    return StencilPlan(centers, indices, mask, centers - 1, centers + 1, float(r), include_center, hoods)


@dataclass(frozen=True)
class NodeBatch:
    """Several node sets laid end to end in one flat coordinate vector.

    Lets one vectorized integrator advance a whole ensemble at once; node
    ``j`` of member ``i`` sits at flat index ``starts[i] + j``.
    """

    members: tuple
    positions: np.ndarray
    starts: np.ndarray

    @property
    def boundary_indices(self):
        return np.concatenate([s + m.boundary_indices for s, m in zip(self.starts, self.members)])

    def split(self, values):
        return [np.asarray(values)[s : s + m.n] for s, m in zip(self.starts, self.members)]


def stack_nodes(node_sets, r, include_center=True, plans=None):
    """Flat :class:`NodeBatch` and the matching merged :class:`StencilPlan`."""
    node_sets = tuple(node_sets)
    if plans is None:
        plans = [stencil_plan(ns, r, include_center) for ns in node_sets]
    sizes = np.array([ns.n for ns in node_sets])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    width = max(p.indices.shape[1] for p in plans)

    def pad(a, fill):
        extra = width - a.shape[1]
        return np.concatenate([a, np.broadcast_to(fill, (a.shape[0], extra))], axis=1) if extra else a

    centers, indices, mask, left, right = [], [], [], [], []
    for s, p in zip(starts, plans):
        c = p.centers + s
        centers.append(c)
        indices.append(pad(p.indices + s, c[:, None]))
        mask.append(pad(p.mask, False))
        left.append(p.left + s)
        right.append(p.right + s)
    batch = NodeBatch(node_sets, np.concatenate([ns.positions for ns in node_sets]), starts)
    plan = StencilPlan(
        np.concatenate(centers), np.concatenate(indices), np.concatenate(mask),
        np.concatenate(left), np.concatenate(right), float(plans[0].radius), plans[0].include_center,
    )
    return batch, plan
