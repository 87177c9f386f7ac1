"""Discrete-time stochastic systems with additive noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .noise import NoiseFamily


class DimensionError(ValueError):
    """Raised when an argument does not have the dimension the system expects."""

    def __init__(self, argument: str, expected: int, got: int):
        self.argument = argument
        self.expected = expected
        self.got = got
        super().__init__(f"argument {argument!r}: expected dimension {expected}, got {got}")


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned closed hyper-rectangle."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same shape")
        if np.any(lo > hi):
            raise ValueError(f"box lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)

    def to_list(self):
        return [self.lower.tolist(), self.upper.tolist()]

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))


@dataclass(frozen=True)
class Space:
    """A box together with the lattice spacing used to discretise it."""

    box: Box
    eta: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if eta.shape != self.box.lower.shape:
            raise ValueError("spacing must have one entry per dimension")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def make(cls, lower, upper, eta) -> "Space":
        return cls(Box(lower, upper), eta)

    @property
    def dim(self) -> int:
        return self.box.dim


MeanFn = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], np.ndarray]
RangeFn = Callable[[np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]], tuple]


@dataclass(frozen=True)
class StochasticSystem:
    """x' = mean_fn(x, u, w) + noise.

    ``mean_fn`` is vectorised: ``x`` has shape (n, state_dim), ``u`` and ``w``
    are either single vectors or (n, .) arrays.  ``mean_range_fn(lo, hi, u, w)``
    returns per-dimension enclosures ``(mlo, mhi)`` of the mean over the boxes
    ``[lo, hi]`` (rows of ``lo``/``hi``); ``affine_A`` gives it for free when
    the mean is affine in x.
    """

    name: str
    state_dim: int
    input_space: Space
    mean_fn: MeanFn
    noise: NoiseFamily
    disturbance_space: Optional[Space] = None
    mean_range_fn: Optional[RangeFn] = None
    affine_A: Optional[np.ndarray] = None
    sampling_time: Optional[float] = None

    def __post_init__(self):
        if self.noise.dim != self.state_dim:
            raise DimensionError("noise", self.state_dim, self.noise.dim)
        if self.affine_A is None and self.mean_range_fn is None:
            raise ValueError(f"{self.name}: need affine_A or mean_range_fn")
        if self.affine_A is not None:
            A = np.asarray(self.affine_A, dtype=float)
            if A.shape != (self.state_dim, self.state_dim):
                raise DimensionError("affine_A", self.state_dim, A.shape[0])
            object.__setattr__(self, "affine_A", A)

    @property
    def input_dim(self) -> int:
        return self.input_space.dim

    @property
    def disturbance_dim(self) -> int:
        return 0 if self.disturbance_space is None else self.disturbance_space.dim

    def mean_range(self, lo, hi, u, w=None):
        """Enclosure of the mean over the boxes [lo, hi] at fixed (u, w)."""
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        if self.mean_range_fn is not None:
            return self.mean_range_fn(lo, hi, u, w)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        m = self.mean_fn(center, u, w)
        rad = half @ np.abs(self.affine_A).T
        return m - rad, m + rad


def _as_vector(value, expected: int, argument: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.ndim != 1 or v.size != expected:
        raise DimensionError(argument, expected, v.size if v.ndim == 1 else v.shape[-1])
    return v


def eval_mean(system: StochasticSystem, x, u, w=None) -> np.ndarray:
    """Noise-free next-state mean of ``system`` at a single (x, u, w)."""
    x = _as_vector(x, system.state_dim, "x")
    u = _as_vector(u, system.input_dim, "u")
    if w is None:
        if system.disturbance_dim:
            w = np.zeros(system.disturbance_dim)
    else:
        w = _as_vector(w, system.disturbance_dim, "w")
    out = np.asarray(system.mean_fn(x[None, :], u, w), dtype=float)
    return out.reshape(-1)


def cos_range(lo, hi):
    """Tight enclosure of cos over each interval [lo, hi] (arrays)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    clo, chi = np.cos(lo), np.cos(hi)
    mn = np.minimum(clo, chi)
    mx = np.maximum(clo, chi)
    # extrema of cos sit at multiples of pi
    k_max = np.ceil(lo / (2 * np.pi))
    has_max = 2 * np.pi * k_max <= hi
    k_min = np.ceil((lo - np.pi) / (2 * np.pi))
    has_min = 2 * np.pi * k_min + np.pi <= hi
    mx = np.where(has_max, 1.0, mx)
    mn = np.where(has_min, -1.0, mn)
    return mn, mx


def sin_range(lo, hi):
    return cos_range(np.asarray(lo) - np.pi / 2, np.asarray(hi) - np.pi / 2)


def scaled_range(mn, mx, k):
    """Range of k * t for t in [mn, mx] with k of either sign."""
    a, b = k * mn, k * mx
    return np.minimum(a, b), np.maximum(a, b)
