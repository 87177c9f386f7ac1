"""Additive noise families and their interval masses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri


def _gauss_mass(lo, hi, mean, sigma):
    """Mass of N(mean, sigma^2) on [lo, hi], computed on the tail side
    to avoid cancellation far from the mean."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mean = np.asarray(mean, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = (lo - mean) / sigma
        b = (hi - mean) / sigma
    upper_side = a > 0
    left = ndtr(b) - ndtr(a)
    right = ndtr(-a) - ndtr(-b)
    out = np.where(upper_side, right, left)
    return np.clip(out, 0.0, 1.0)


def _dirac_mass(lo, hi, mean):
    # half-open so that adjacent cells never both claim the atom
    lo, hi, mean = np.broadcast_arrays(
        np.asarray(lo, float), np.asarray(hi, float), np.asarray(mean, float)
    )
    inside = (mean >= lo) & (mean < hi)
    inside |= np.isposinf(hi) & (mean >= lo)
    return inside.astype(float)


def _expon_mass(lo, hi, mean, scale, rate):
    """Mass of mean + scale * Exp(rate) on [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mean = np.asarray(mean, dtype=float)
    t_lo = np.maximum((lo - mean) / scale, 0.0)
    t_hi = np.maximum((hi - mean) / scale, 0.0)
    with np.errstate(over="ignore"):
        out = np.exp(-rate * t_lo) - np.exp(-rate * t_hi)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class NoiseFamily:
    """Additive noise on the next state.

    ``kind`` is ``"gaussian"`` (``scale`` holds per-dimension standard
    deviations) or ``"exponential"`` (``scale`` holds the multiplier R and
    ``rate`` the exponential rate, so the noise is ``R * Exp(rate)``).

    ``groups`` assigns each dimension to a dependence group.  Dimensions in
    different groups are independent; inside a group only the marginals are
    trusted, which matters for the abstraction bounds.  ``cov`` is only used
    for sampling correlated Gaussian noise.
    """

    kind: str
    scale: np.ndarray
    rate: float = 1.0
    groups: tuple[int, ...] | None = None
    cov: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "scale", scale)
        if self.kind not in ("gaussian", "exponential"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if np.any(scale < 0) or not np.all(np.isfinite(scale)):
            raise ValueError("noise scales must be finite and non-negative")
        if self.kind == "exponential" and (self.rate <= 0 or np.any(scale == 0)):
            raise ValueError("exponential noise needs positive rate and scale")
        if self.groups is None:
            object.__setattr__(self, "groups", tuple(range(scale.size)))
        elif len(self.groups) != scale.size:
            raise ValueError("groups must name one group per dimension")
        if self.cov is not None:
            cov = np.asarray(self.cov, dtype=float)
            if cov.shape != (scale.size, scale.size):
                raise ValueError("cov shape does not match the noise dimension")
            object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.scale.size

    @property
    def independent(self) -> bool:
        return len(set(self.groups)) == self.dim

    @classmethod
    def gaussian(cls, sigma, **kw) -> "NoiseFamily":
        return cls("gaussian", np.asarray(sigma, dtype=float), **kw)

    @classmethod
    def exponential(cls, scale, rate=1.0) -> "NoiseFamily":
        return cls("exponential", np.asarray(scale, dtype=float), rate=float(rate))

    def mass(self, dim, lo, hi, mean):
        """Vectorised probability that ``mean + noise_dim`` lands in [lo, hi]."""
        s = self.scale[dim]
        if self.kind == "gaussian":
            if s == 0.0:
                return _dirac_mass(lo, hi, mean)
            return _gauss_mass(lo, hi, mean, s)
        return _expon_mass(lo, hi, mean, s, self.rate)

    def argmax_mean(self, dim, lo, hi):
        """Mean that maximises the mass on [lo, hi] (the mass is unimodal in
        the mean for both families)."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if self.kind == "gaussian":
            # unbounded sides pull the maximiser towards them
            with np.errstate(invalid="ignore"):
                mid = 0.5 * (lo + hi)
            return np.where(np.isnan(mid), 0.0, mid)
        return lo

    def support_radius(self, dim, cutoff):
        """(below, above): distances from the mean beyond which a cell of any
        size carries less than ``cutoff`` mass."""
        s = self.scale[dim]
        if self.kind == "gaussian":
            if s == 0.0:
                return 0.0, 0.0
            r = float(-s * ndtri(cutoff))
            return r, r
        return 0.0, float(s * np.log(1.0 / cutoff) / self.rate)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` noise vectors, shape (n, dim)."""
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size=(n, self.dim)) * self.scale
        if self.cov is not None and not self.independent:
            z = rng.standard_normal((n, self.dim))
            w, v = np.linalg.eigh(self.cov)
            root = v * np.sqrt(np.clip(w, 0.0, None))
            return z @ root.T
        return rng.standard_normal((n, self.dim)) * self.scale


def noise_interval_cdf(noise: NoiseFamily, dim: int, lo: float, hi: float, mean: float) -> float:
    """Probability mass the additive noise places on ``[lo, hi]`` around ``mean``."""
    if lo > hi:
        raise ValueError(f"empty interval: lo={lo} > hi={hi}")
    return float(noise.mass(dim, lo, hi, mean))
