"""Monte Carlo validation of a synthesized controller on the continuous system."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from ..engine import Policy
from ..gridding import AVOID, TARGET, Grid, Specification

CONFIDENCE = 0.99
DEFAULT_MAX_STEPS = 2000


def wilson_interval(successes: int, runs: int, confidence: float = CONFIDENCE):
    """Wilson score interval for a binomial proportion."""
    if runs < 1:
        raise ValueError("runs must be positive")
    z = float(ndtri(0.5 + confidence / 2))
    p = successes / runs
    denom = 1 + z * z / runs
    centre = (p + z * z / (2 * runs)) / denom
    half = z * np.sqrt(p * (1 - p) / runs + z * z / (4 * runs * runs)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class McResult:
    frequency: float
    successes: int
    runs: int
    ci_low: float
    ci_high: float
    unresolved: int = 0

    @property
    def delta(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def contained(self, lower: float, upper: float) -> bool:
        """Frequency inside [lower - delta, upper + delta]."""
        return lower - self.delta <= self.frequency <= upper + self.delta

    def to_dict(self) -> dict:
        return {
            "frequency": self.frequency,
            "successes": self.successes,
            "runs": self.runs,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "delta": self.delta,
            "unresolved": self.unresolved,
        }


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def monte_carlo(systems, grid: Grid, policy: Policy, labels, inputs, spec: Specification, x0,
                runs: int = 10_000, seed: int = 0, disturbances=None,
                max_steps: int = DEFAULT_MAX_STEPS) -> McResult:
    """Simulate ``runs`` closed-loop trajectories of the continuous system from ``x0``.

    The action at each step is looked up from the cell containing the
    current state.  Reaching a target cell counts as success for reach
    specifications; entering an avoid cell or leaving the grid is failure.
    Safety succeeds when the horizon is survived.  Infinite-horizon runs
    still undecided after ``max_steps`` count as failures.

    Noise for step k comes from a generator seeded by (seed, k) and run i
    uses row i, so results do not depend on how runs are scheduled.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    seq = list(systems) if isinstance(systems, (list, tuple)) else [systems]
    labels = np.asarray(labels)[: grid.n_states]
    inputs = np.atleast_2d(inputs)
    ws = None if disturbances is None else np.atleast_2d(disturbances)
    horizon = spec.horizon
    steps = max_steps if horizon is None else horizon
    x = np.tile(np.asarray(x0, float).reshape(1, -1), (runs, 1))
    alive = np.ones(runs, bool)
    success = np.zeros(runs, bool)
    safety = spec.kind == "safety"
    for k in range(steps + 1):
        idx = grid.index_of(x[alive])
        tag = np.where(idx >= 0, labels[np.maximum(idx, 0)], AVOID)
        live = np.flatnonzero(alive)
        failed = tag == AVOID
        alive[live[failed]] = False
        if not safety:
            hit = tag == TARGET
            success[live[hit]] = True
            alive[live[hit]] = False
        if k == steps or not alive.any():
            break
        sel = alive[live]
        live = live[sel]
        idx = idx[sel]
        acts = policy.actions[idx] if policy.stationary else policy.actions[k][idx]
        if np.any(acts < 0):
            raise ValueError("policy has no action for a reachable non-terminal cell")
        sys_k = seq[k % len(seq)]
        rng = _step_rng(seed, k)
        noise = sys_k.noise.sample(rng, runs)[live]
        u = inputs[acts]
        w = None
        if ws is not None:
            w = ws[rng.integers(0, len(ws), size=runs)[live]]
        x[live] = _mean_rows(sys_k, x[live], u, w) + noise
    if safety:
        success = alive.copy()
    unresolved = int(alive.sum()) if horizon is None and not safety else 0
    s = int(success.sum())
    lo, hi = wilson_interval(s, runs)
    return McResult(s / runs, s, runs, lo, hi, unresolved)


def _mean_rows(system, x, u, w):
    """Mean of every row; inputs and disturbances may differ per row."""
    out = np.empty_like(x)
    keys = u if w is None else np.hstack([u, w])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    nu = u.shape[1]
    for g, key in enumerate(uniq):
        rows = inv == g
        wk = None if w is None else key[nu:]
        out[rows] = system.mean_fn(x[rows], key[:nu], wk)
    return out
