"""Interval transition bounds over grid cells and IMDP assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .gridding import AVOID, OTHER, TARGET, Grid, Labels, Specification
from .models.noise import NoiseFamily
from .models.systems import StochasticSystem

PRUNE_CUTOFF = 1e-12
FEAS_TOL = 1e-9

_NONE = np.empty(0, np.int64)


def _policy_arg(policy):
    return _NONE if policy is None else np.ascontiguousarray(policy, dtype=np.int64)


def _stack(V, use_prev, prev_policy):
    """Value vectors as a C-contiguous (m, n) array plus per-vector flags."""
    V = np.asarray(V, dtype=float)
    one = V.ndim == 1
    V2 = np.ascontiguousarray(np.atleast_2d(V))
    if use_prev is None:
        flags = np.full(V2.shape[0], prev_policy is not None)
    else:
        flags = np.asarray(use_prev, bool)
    return V2, flags, one


class InfeasibleRowError(ValueError):
    def __init__(self, state, action, detail):
        self.state = state
        self.action = action
        super().__init__(f"row (state={state}, action={action}) is infeasible: {detail}")


def mean_range(system: StochasticSystem, cell_lower, cell_upper, u, w=None):
    """Per-dimension interval enclosing the mean over a source cell."""
    mlo, mhi = system.mean_range(cell_lower, cell_upper, u, w)
    return np.asarray(mlo, float), np.asarray(mhi, float)


def dim_prob_bounds(mean_lo, mean_hi, noise: NoiseFamily, dim: int, dest_lo, dest_hi):
    """[lower, upper] of the mass on [dest_lo, dest_hi] over means in
    [mean_lo, mean_hi].  The mass is unimodal in the mean, so the maximum is
    at the unconstrained maximiser clamped into the range and the minimum at
    one of the range endpoints."""
    mean_lo = np.asarray(mean_lo, float)
    mean_hi = np.asarray(mean_hi, float)
    star = np.clip(noise.argmax_mean(dim, dest_lo, dest_hi), mean_lo, mean_hi)
    upper = noise.mass(dim, dest_lo, dest_hi, star)
    lower = np.minimum(noise.mass(dim, dest_lo, dest_hi, mean_lo), noise.mass(dim, dest_lo, dest_hi, mean_hi))
    return np.minimum(lower, upper), upper


def cell_prob_bounds(mean_lo, mean_hi, noise: NoiseFamily, dest_lo, dest_hi):
    """Joint bounds for a box destination: product over independent groups,
    Frechet bounds inside a dependence group."""
    mean_lo = np.atleast_1d(mean_lo)
    mean_hi = np.atleast_1d(mean_hi)
    groups = np.asarray(noise.groups)
    plo, phi = 1.0, 1.0
    for g in np.unique(groups):
        dims = np.flatnonzero(groups == g)
        los, his = [], []
        for d in dims:
            l, h = dim_prob_bounds(mean_lo[d], mean_hi[d], noise, d, dest_lo[d], dest_hi[d])
            los.append(l)
            his.append(h)
        plo *= max(0.0, float(np.sum(los)) - (len(dims) - 1))
        phi *= float(np.min(his))
    return plo, phi


@dataclass
class Imdp:
    """Explicit IMDP: CSR rows indexed ``state * n_actions + action``.

    The last state is the sink.  ``absorbing`` states (and the sink) carry a
    [1, 1] self-loop for every action.
    """

    n_states: int
    n_actions: int
    row_ptr: np.ndarray
    cols: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    labels: np.ndarray
    absorbing: np.ndarray

    @property
    def sink(self) -> int:
        return self.n_states - 1

    def row(self, s: int, a: int):
        r = s * self.n_actions + a
        b, e = self.row_ptr[r], self.row_ptr[r + 1]
        return self.cols[b:e], self.lo[b:e], self.hi[b:e]

    def to_csr(self) -> "Imdp":
        return self

    @classmethod
    def from_rows(cls, rows, labels, absorbing=None) -> "Imdp":
        """Build from ``rows[s][a] = [(successor, lo, hi), ...]``."""
        n_states = len(rows)
        n_actions = len(rows[0])
        ptr = [0]
        cols, lo, hi = [], [], []
        for s in range(n_states):
            if len(rows[s]) != n_actions:
                raise ValueError("every state needs the same number of actions")
            for a in range(n_actions):
                for c, l, h in rows[s][a]:
                    cols.append(c)
                    lo.append(l)
                    hi.append(h)
                ptr.append(len(cols))
        labels = np.asarray(labels, dtype=np.int8)
        if absorbing is None:
            absorbing = labels != OTHER
        return cls(
            n_states,
            n_actions,
            np.asarray(ptr, np.int64),
            np.asarray(cols, np.int64),
            np.asarray(lo, float),
            np.asarray(hi, float),
            labels,
            np.asarray(absorbing, bool),
        )

    def nnz(self) -> int:
        return int(self.cols.size)

    def backup(self, V, pinned, adversary_max, maximize_actions, fixed_policy=None,
               prev_policy=None, strict_tol=0.0, use_prev=None):
        V2, flags, one = _stack(V, use_prev, prev_policy)
        out, act = K.backup_csr(V2, pinned, self.row_ptr, self.cols, self.lo, self.hi, self.n_actions,
                                adversary_max, maximize_actions, _policy_arg(fixed_policy),
                                _policy_arg(prev_policy), flags, strict_tol)
        return (out[0], act[0]) if one else (out, act)

    def positive(self, seed, blocked, forced, all_actions, policy=None):
        return K.positive_csr(seed, blocked, forced, all_actions, _policy_arg(policy),
                              self.row_ptr, self.cols, self.lo, self.hi, self.n_actions)


@dataclass
class FactoredImdp:
    """IMDP over a grid whose rows are stored as per-dimension factor windows.

    ``lo_t``/``hi_t`` have shape (n_grid, n_actions, n_w, D, W) and
    ``starts`` (n_grid, n_actions, D); ``esc_lo``/``esc_hi`` bound the mass
    that leaves the domain or the kept window.  The explicit row of (s, a) is produced
    by :meth:`row`.  State ``n_grid`` is the sink.
    """

    grid: Grid
    inputs: np.ndarray
    starts: np.ndarray
    lo_t: np.ndarray
    hi_t: np.ndarray
    esc_lo: np.ndarray
    esc_hi: np.ndarray
    groups: np.ndarray
    labels: np.ndarray
    absorbing: np.ndarray
    cutoff: float = PRUNE_CUTOFF

    @property
    def n_states(self) -> int:
        return self.grid.n_states + 1

    @property
    def n_actions(self) -> int:
        return self.starts.shape[1]

    @property
    def sink(self) -> int:
        return self.grid.n_states

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1

    @property
    def independent(self) -> bool:
        return self.n_groups == self.groups.size

    def kernel_args(self):
        return (
            self.starts,
            self.lo_t,
            self.hi_t,
            self.esc_lo,
            self.esc_hi,
            np.asarray(self.grid.points_per_dim, np.int64),
            self.grid.strides,
            self.groups,
            self.n_groups,
            self.independent,
            self.cutoff,
        )

    def row(self, s: int, a: int):
        if s == self.sink or self.absorbing[s]:
            return np.array([s]), np.ones(1), np.ones(1)
        cap = int(np.prod(np.minimum(self.lo_t.shape[4], self.grid.points_per_dim))) + 1
        cols = np.empty(cap, np.int64)
        lo = np.empty(cap)
        hi = np.empty(cap)
        n = K.expand_factored(s, a, *self.kernel_args(), self.sink, cols, lo, hi)
        return cols[:n].copy(), lo[:n].copy(), hi[:n].copy()

    def to_csr(self) -> Imdp:
        row_ptr, cols, lo, hi = K.factored_to_csr(*self.kernel_args(), self.absorbing)
        return Imdp(self.n_states, self.n_actions, row_ptr, cols, lo, hi, self.labels, self.absorbing)

    def nbytes(self) -> int:
        return int(self.lo_t.nbytes + self.hi_t.nbytes + self.starts.nbytes + self.esc_lo.nbytes * 2)

    def backup(self, V, pinned, adversary_max, maximize_actions, fixed_policy=None,
               prev_policy=None, strict_tol=0.0, use_prev=None):
        V2, flags, one = _stack(V, use_prev, prev_policy)
        fp = _policy_arg(fixed_policy)[: self.grid.n_states]
        pp = _policy_arg(prev_policy)[: self.grid.n_states]
        out, act = K.backup_factored(V2, pinned, *self.kernel_args(), adversary_max, maximize_actions,
                                     fp, pp, flags, strict_tol)
        act = np.concatenate([act, np.full((act.shape[0], 1), -1, np.int64)], axis=1)
        return (out[0], act[0]) if one else (out, act)

    def positive(self, seed, blocked, forced, all_actions, policy=None):
        pol = _policy_arg(policy)[: self.grid.n_states]
        return K.positive_factored(seed, blocked, forced, all_actions, pol, *self.kernel_args())


def _extended_labels(labels: Labels) -> np.ndarray:
    return np.append(labels.tags, np.int8(AVOID)).astype(np.int8)


def build_imdp(
    system: StochasticSystem,
    grid: Grid,
    inputs: np.ndarray,
    disturbances: Optional[np.ndarray],
    labels: Labels,
    truncation_cutoff: float = PRUNE_CUTOFF,
    chunk: int = 4096,
    point: bool = False,
) -> FactoredImdp:
    """Abstract ``system`` on ``grid`` into a (factored) IMDP.

    Per (state, action) and per disturbance lattice value the mean range over
    the source cell is bounded, per-dimension interval masses are computed for
    every destination cell within the noise support, and the joint successor
    bounds are taken robustly (min of lower, max of upper) over the lattice.
    Mass leaving the grid, and successors whose upper bound is below
    ``truncation_cutoff``, go to the sink, which is labelled avoid.  Target and
    avoid states become absorbing.

    With ``point=True`` the source cell collapses to its representative point,
    which yields the non-interval (point-mass) abstraction used for comparison.
    """
    inputs = np.atleast_2d(np.asarray(inputs, float))
    if inputs.shape[1] != system.input_dim:
        raise ValueError(f"inputs have dimension {inputs.shape[1]}, system expects {system.input_dim}")
    ws = [None] if disturbances is None else list(np.atleast_2d(np.asarray(disturbances, float)))
    D = grid.dim
    noise = system.noise
    n_grid, n_act, n_w = grid.n_states, len(inputs), len(ws)
    cl = grid.cell_lower
    eta = grid.eta

    cell_lo, cell_hi = grid.cells()
    if point:
        cell_lo = cell_hi = grid.points()
    mlo = np.empty((n_grid, n_act, n_w, D))
    mhi = np.empty((n_grid, n_act, n_w, D))
    for a, u in enumerate(inputs):
        for wi, w in enumerate(ws):
            lo_a, hi_a = mean_range(system, cell_lo, cell_hi, u, w)
            mlo[:, a, wi] = lo_a
            mhi[:, a, wi] = hi_a
    if not (np.all(np.isfinite(mlo)) and np.all(np.isfinite(mhi))):
        raise ValueError(f"{system.name}: mean range is not finite on the grid")

    below = np.empty(D)
    above = np.empty(D)
    for d in range(D):
        below[d], above[d] = noise.support_radius(d, truncation_cutoff)
    first = np.floor((mlo.min(axis=2) - below - cl) / eta).astype(np.int64) - 1
    last = np.floor((mhi.max(axis=2) + above - cl) / eta).astype(np.int64) + 1
    n_pts = np.asarray(grid.points_per_dim)
    first = np.clip(first, -1, n_pts)
    last = np.clip(last, -1, n_pts)
    W = int(max(1, (last - first + 1).max()))
    W = min(W, int(n_pts.max()) + 2)
    starts = first

    lo_t = np.zeros((n_grid, n_act, n_w, D, W))
    hi_t = np.zeros((n_grid, n_act, n_w, D, W))
    esc_lo = np.zeros((n_grid, n_act))
    esc_hi = np.zeros((n_grid, n_act))
    groups = np.asarray(noise.groups, np.int64)
    ks = np.arange(W)
    cu = grid.cell_upper
    for c0 in range(0, n_grid, chunk):
        c1 = min(n_grid, c0 + chunk)
        out_hi = np.empty((c1 - c0, n_act, n_w, D))
        dom_hi = np.empty((c1 - c0, n_act, n_w, D))
        for d in range(D):
            m_lo = mlo[c0:c1, :, :, d]
            m_hi = mhi[c0:c1, :, :, d]
            j = starts[c0:c1, :, d, None] + ks  # (c, a, W)
            valid = (j >= 0) & (j < n_pts[d])
            dl = cl[d] + j * eta[d]
            dh = dl + eta[d]
            l, h = dim_prob_bounds(m_lo[..., None], m_hi[..., None], noise, d, dl[:, :, None, :], dh[:, :, None, :])
            keep = valid[:, :, None, :] & (h >= truncation_cutoff)
            lo_t[c0:c1, :, :, d, :] = np.where(keep, l, 0.0)
            hi_t[c0:c1, :, :, d, :] = np.where(keep, h, 0.0)
            # mass outside the kept window, maximised over the mean range
            any_k = keep.any(axis=-1)
            k_first = np.argmax(keep, axis=-1)
            k_last = W - 1 - np.argmax(keep[..., ::-1], axis=-1)
            s0 = starts[c0:c1, :, d, None]
            e_lo = cl[d] + (s0 + k_first) * eta[d]
            e_hi = cl[d] + (s0 + k_last + 1) * eta[d]
            inside = np.minimum(noise.mass(d, e_lo, e_hi, m_lo), noise.mass(d, e_lo, e_hi, m_hi))
            out_hi[..., d] = np.where(any_k, 1.0 - inside, 1.0)
            dom_hi[..., d] = dim_prob_bounds(m_lo, m_hi, noise, d, cl[d], cu[d])[1]
        in_lo = np.ones(out_hi.shape[:3])
        in_hi = np.ones(out_hi.shape[:3])
        for g in np.unique(groups):
            dims = np.flatnonzero(groups == g)
            in_lo *= np.maximum(0.0, 1.0 - out_hi[..., dims].sum(axis=-1))
            in_hi *= dom_hi[..., dims].min(axis=-1)
        esc_hi[c0:c1] = np.clip(1.0 - in_lo, 0.0, 1.0).max(axis=2)
        esc_lo[c0:c1] = np.clip(1.0 - in_hi, 0.0, 1.0).min(axis=2)

    tags = _extended_labels(labels)
    absorbing = tags != OTHER
    return FactoredImdp(
        grid=grid,
        inputs=inputs,
        starts=starts,
        lo_t=lo_t,
        hi_t=hi_t,
        esc_lo=esc_lo,
        esc_hi=esc_hi,
        groups=groups,
        labels=tags,
        absorbing=absorbing,
        cutoff=truncation_cutoff,
    )


@dataclass
class ValidationReport:
    n_rows: int
    max_slack: float
    min_slack: float
    nnz: int

    def ok(self) -> bool:
        return self.min_slack >= -FEAS_TOL


def validate_imdp(imdp, tol: float = FEAS_TOL) -> ValidationReport:
    """Check every row: 0 <= lo <= hi <= 1 and sum(lo) <= 1 <= sum(hi); the
    sink must be an absorbing [1, 1] self-loop.  Returns per-row slack
    statistics, slack being min(1 - sum lo, sum hi - 1)."""
    m = imdp.to_csr()
    if np.any(m.lo < -tol) or np.any(m.hi > 1 + tol) or np.any(m.lo > m.hi + tol):
        bad = np.flatnonzero((m.lo < -tol) | (m.hi > 1 + tol) | (m.lo > m.hi + tol))[0]
        r = np.searchsorted(m.row_ptr, bad, side="right") - 1
        raise InfeasibleRowError(r // m.n_actions, r % m.n_actions, "entry bounds out of order")
    seg = m.row_ptr[:-1]
    empty = np.flatnonzero(np.diff(m.row_ptr) == 0)
    if empty.size:
        r = empty[0]
        raise InfeasibleRowError(r // m.n_actions, r % m.n_actions, "empty row")
    sum_lo = np.add.reduceat(m.lo, seg)
    sum_hi = np.add.reduceat(m.hi, seg)
    slack = np.minimum(1.0 - sum_lo, sum_hi - 1.0)
    if np.any(slack < -tol):
        r = int(np.argmin(slack))
        raise InfeasibleRowError(r // m.n_actions, r % m.n_actions, f"slack {slack[r]:.3e}")
    for a in range(m.n_actions):
        c, l, h = m.row(m.sink, a)
        if not (c.size == 1 and c[0] == m.sink and l[0] == 1.0 and h[0] == 1.0):
            raise InfeasibleRowError(m.sink, a, "sink is not an absorbing [1, 1] self-loop")
    return ValidationReport(int(slack.size), float(slack.max()), float(slack.min()), int(m.cols.size))


# container ------------------------------------------------------------------

FORMAT_VERSION = 1


def save_imdp(imdp, path) -> Path:
    """Write an IMDP as a .npz container: a JSON header (dims, counts) plus
    CSR arrays for the bounds and the label vector."""
    m = imdp.to_csr()
    header = {
        "format": "imdpkit-imdp",
        "version": FORMAT_VERSION,
        "n_states": m.n_states,
        "n_actions": m.n_actions,
        "nnz": m.nnz(),
        "sink": m.sink,
    }
    if isinstance(imdp, FactoredImdp):
        header["grid"] = imdp.grid.to_dict()
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(
            fh,
            header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
            row_ptr=m.row_ptr,
            cols=m.cols,
            lo=m.lo,
            hi=m.hi,
            labels=m.labels,
            absorbing=m.absorbing,
        )
    return path


def load_imdp(path) -> Imdp:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != "imdpkit-imdp":
            raise ValueError(f"{path}: not an IMDP container")
        return Imdp(
            header["n_states"],
            header["n_actions"],
            z["row_ptr"].copy(),
            z["cols"].copy(),
            z["lo"].copy(),
            z["hi"].copy(),
            z["labels"].copy(),
            z["absorbing"].copy(),
        )
