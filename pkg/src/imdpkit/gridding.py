"""Uniform grids over state/input spaces and region labelling."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SNAP_TOL = 1e-9

OTHER, TARGET, AVOID = 0, 1, 2
TAG_NAMES = {OTHER: "other", TARGET: "target", AVOID: "avoid"}


class GridError(ValueError):
    pass


def _lattice_count(span: float, eta: float) -> int:
    if eta <= 0:
        raise GridError(f"spacing must be positive, got {eta}")
    if span == 0:
        return 1
    if eta > span * (1 + SNAP_TOL):
        raise GridError(f"spacing {eta} exceeds span {span}")
    ratio = span / eta
    n = round(ratio)
    if abs(ratio - n) > SNAP_TOL * max(1.0, ratio):
        raise GridError(f"span {span} is not a multiple of spacing {eta}")
    return int(n) + 1


@dataclass(frozen=True)
class Grid:
    """Inclusive lattice ``lower + k * eta`` with a cell of half-width eta/2
    around every point.  States are numbered row-major (last axis fastest)."""

    lower: np.ndarray
    upper: np.ndarray
    eta: np.ndarray
    points_per_dim: tuple
    strides: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("lower", "upper", "eta"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        counts = tuple(int(c) for c in self.points_per_dim)
        object.__setattr__(self, "points_per_dim", counts)
        strides = np.ones(len(counts), dtype=np.int64)
        for d in range(len(counts) - 2, -1, -1):
            strides[d] = strides[d + 1] * counts[d + 1]
        object.__setattr__(self, "strides", strides)

    @classmethod
    def from_counts(cls, lower, upper, cells) -> "Grid":
        """Partition [lower, upper] into ``cells`` equal cells per dimension;
        representative points are the cell centres."""
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        cells = np.atleast_1d(np.asarray(cells, int))
        if np.any(cells < 1):
            raise GridError("cell counts must be positive")
        if np.any(upper <= lower):
            raise GridError("lower must be below upper in every dimension")
        eta = (upper - lower) / cells
        return cls(lower + eta / 2, upper - eta / 2, eta, tuple(cells.tolist()))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_states(self) -> int:
        return int(np.prod(self.points_per_dim))

    @property
    def cell_lower(self) -> np.ndarray:
        """Lower corner of the union of all cells."""
        return self.lower - self.eta / 2

    @property
    def cell_upper(self) -> np.ndarray:
        return self.upper + self.eta / 2

    def axis(self, d: int) -> np.ndarray:
        return self.lower[d] + self.eta[d] * np.arange(self.points_per_dim[d])

    def multi_index(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        return (i[..., None] // self.strides) % np.asarray(self.points_per_dim)

    def point_of(self, i) -> np.ndarray:
        return self.lower + self.eta * self.multi_index(i)

    def points(self) -> np.ndarray:
        return self.point_of(np.arange(self.n_states))

    def index_of(self, points) -> np.ndarray:
        """Index of the cell containing each point, -1 outside the grid."""
        p = np.atleast_2d(np.asarray(points, float))
        n = np.asarray(self.points_per_dim)
        k = np.floor((p - self.cell_lower) / self.eta).astype(np.int64)
        # the outer faces of the grid belong to the last cell
        k[(k == n) & (p <= self.cell_upper)] -= 1
        inside = np.all((k >= 0) & (k < n), axis=1)
        return np.where(inside, (k * self.strides).sum(axis=1), -1)

    def cells(self, idx=None):
        """Lower and upper corners of the cells with the given indices."""
        pts = self.points() if idx is None else self.point_of(idx)
        return pts - self.eta / 2, pts + self.eta / 2

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "eta": self.eta.tolist(),
            "points_per_dim": list(self.points_per_dim),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(d["lower"], d["upper"], d["eta"], tuple(d["points_per_dim"]))


def build_grid(lower, upper, eta) -> Grid:
    """Inclusive endpoint lattice over [lower, upper] with spacing eta."""
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    if not (lower.shape == upper.shape == eta.shape):
        raise GridError("lower, upper and eta must have the same length")
    if np.any(upper <= lower):
        raise GridError("lower must be below upper in every dimension")
    counts = tuple(_lattice_count(float(h - l), float(e)) for l, h, e in zip(lower, upper, eta))
    return Grid(lower, upper, eta, counts)


def build_input_grid(lower, upper, eta) -> np.ndarray:
    """All lattice input vectors, shape (n_inputs, input_dim), row-major.

    A degenerate dimension (lower == upper) contributes its single value.
    """
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    if np.any(upper < lower):
        raise GridError("input lower bound exceeds upper bound")
    axes = []
    for l, h, e in zip(lower, upper, eta):
        n = _lattice_count(float(h - l), float(e))
        axes.append(l + e * np.arange(n))
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, lower.size)


@dataclass(frozen=True)
class Specification:
    """What to verify: reach the target, stay safe, or reach while avoiding.

    ``horizon`` is a step count for finite-horizon problems and ``None`` for
    the infinite horizon, where ``epsilon`` is the convergence tolerance.
    Avoid regions are honoured for every kind; mass leaving the grid always
    counts as avoid.
    """

    kind: str
    target: tuple = ()
    avoid: tuple = ()
    horizon: Optional[int] = None
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("reach", "safety", "reach-avoid"):
            raise ValueError(f"unknown specification kind {self.kind!r}")
        object.__setattr__(self, "target", tuple(self.target))
        object.__setattr__(self, "avoid", tuple(self.avoid))
        if self.kind == "reach-avoid" and not self.target:
            raise ValueError("reach-avoid needs a non-empty target")
        if self.kind == "safety" and self.target:
            raise ValueError("safety specifications carry no target")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def infinite(self) -> bool:
        return self.horizon is None

    def with_horizon(self, horizon: Optional[int]) -> "Specification":
        return Specification(self.kind, self.target, self.avoid, horizon, self.epsilon)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target": [b.to_list() for b in self.target],
            "avoid": [b.to_list() for b in self.avoid],
            "horizon": self.horizon,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Specification":
        from .models.systems import Box

        return cls(
            d["kind"],
            tuple(Box(*b) for b in d.get("target", [])),
            tuple(Box(*b) for b in d.get("avoid", [])),
            d.get("horizon"),
            d.get("epsilon", 1e-6),
        )


@dataclass(frozen=True)
class Labels:
    """One tag per grid state (OTHER / TARGET / AVOID)."""

    tags: np.ndarray

    def count(self, tag: int) -> int:
        return int(np.count_nonzero(self.tags == tag))

    @property
    def n_target(self) -> int:
        return self.count(TARGET)

    @property
    def n_avoid(self) -> int:
        return self.count(AVOID)

    def to_dict(self) -> dict:
        return {"tags": self.tags.tolist(), "legend": TAG_NAMES}


def _in_regions(points: np.ndarray, regions: Sequence, eta: np.ndarray) -> np.ndarray:
    tol = SNAP_TOL * eta
    hit = np.zeros(len(points), dtype=bool)
    for box in regions:
        hit |= np.all((points >= box.lower - tol) & (points <= box.upper + tol), axis=1)
    return hit


def label_states(grid: Grid, spec: Specification) -> Labels:
    """Tag each state by whether its representative point lies in a target or
    avoid region (closed regions; avoid wins on overlap)."""
    pts = grid.points()
    tags = np.full(grid.n_states, OTHER, dtype=np.int8)
    if spec.target:
        tags[_in_regions(pts, spec.target, grid.eta)] = TARGET
    if spec.avoid:
        tags[_in_regions(pts, spec.avoid, grid.eta)] = AVOID
    return Labels(tags)
