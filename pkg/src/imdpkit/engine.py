"""Robust dynamic programming over interval MDPs.

Values are vectors over all IMDP states (the sink last).  The controller
maximises the satisfaction probability; the pessimistic adversary resolves
every interval row against it and the optimistic one in its favour.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .gridding import AVOID, OTHER, TARGET, Specification

DEFAULT_CAP = 1_000_000
FEAS_TOL = 1e-9
TIE_BREAK = "lowest-index"


class ConvergenceError(RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


def o_extremize(values, lo, hi, mode: str = "max") -> float:
    """max/min of sum(p * values) over lo <= p <= hi, sum(p) = 1."""
    values = np.ascontiguousarray(values, dtype=float)
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    if not (values.shape == lo.shape == hi.shape):
        raise ValueError("values, lo and hi must have the same shape")
    if np.any(lo > hi + FEAS_TOL) or lo.sum() > 1 + FEAS_TOL or hi.sum() < 1 - FEAS_TOL:
        raise ValueError("infeasible interval row")
    return float(K.extremize(values, lo, hi, values.size, mode == "max"))


@dataclass
class ValueBounds:
    lower: np.ndarray
    upper: np.ndarray

    def gap(self) -> np.ndarray:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass
class Policy:
    """Action index per state, or per (step, state) for finite horizons.

    Terminal states and the sink carry -1.
    """

    actions: np.ndarray
    stationary: bool
    tie_break: str = TIE_BREAK

    def action(self, state, step: int = 0):
        if self.stationary:
            return self.actions[state]
        return self.actions[min(step, len(self.actions) - 1)][state]

    @property
    def horizon(self) -> Optional[int]:
        return None if self.stationary else int(self.actions.shape[0])

    def to_dict(self) -> dict:
        return {"stationary": self.stationary, "tie_break": self.tie_break, "actions": self.actions.tolist()}


@dataclass
class Summary:
    max_lower: float
    mean_lower: float
    mean_error: float
    n_nonterminal: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Solution:
    bounds: ValueBounds
    policy: Policy
    iterations: int = 0
    residual: float = 0.0
    lower_monotone: bool = True
    upper_monotone: bool = True
    free_upper: Optional[np.ndarray] = None
    history: list = field(default_factory=list)


def _masks(labels):
    labels = np.asarray(labels)
    return labels == TARGET, labels == AVOID


def bellman_backup(imdp, V, adversary: str = "pessimistic", objective: str = "maximize",
                   fixed_policy=None, pinned=None):
    """One synchronous sweep.  Absorbing states (and the sink) stay put."""
    V = np.ascontiguousarray(V, dtype=float)
    if V.shape != (imdp.n_states,):
        raise ValueError(f"value vector has shape {V.shape}, expected ({imdp.n_states},)")
    if np.any(V < 0) or np.any(V > 1):
        raise ValueError("values must lie in [0, 1]")
    if pinned is None:
        pinned = np.asarray(imdp.absorbing, bool).copy()
        pinned[-1] = True
    return imdp.backup(V, pinned, adversary == "optimistic", objective == "maximize", fixed_policy)


# qualitative preprocessing -----------------------------------------------------------


def zero_states(imdp, target, blocked, controller_max: bool, adversary_max: bool, policy=None):
    """States whose reach probability is certainly 0 for the given players."""
    forced = not adversary_max
    all_actions = not controller_max
    good = imdp.positive(np.ascontiguousarray(target), np.ascontiguousarray(blocked & ~target), forced,
                         all_actions, policy)
    return ~good


def _iterate_pair(imdp, L, U, pinned, controller_max, adversary_max, eps, cap, policy=None,
                  strict_tol=0.0, track_policy=False, history=None):
    """Jacobi iteration of a lower (from below) and upper (from above) vector
    until ``max(U - L) <= eps``."""
    lower_mono = upper_mono = True
    prev = None
    act = None
    it = 0
    gap = float(np.max(U - L))
    while gap > eps:
        if it >= cap:
            raise ConvergenceError(it, gap)
        out, acts = imdp.backup(np.stack([L, U]), pinned, adversary_max, controller_max, policy,
                                prev if track_policy else None, strict_tol, use_prev=[True, False])
        L2, U2 = out
        act = acts[0]
        lower_mono &= bool(np.all(L2 >= L))
        upper_mono &= bool(np.all(U2 <= U))
        L, U = L2, U2
        prev = act
        it += 1
        gap = float(np.max(U - L))
        if history is not None:
            history.append(gap)
    if track_policy and act is None:
        _, act = imdp.backup(L, pinned, adversary_max, controller_max, policy)
    return L, U, act, it, gap, lower_mono, upper_mono


def _reach_pair(imdp, target, stop, controller_max, adversary_max, eps, cap, policy=None, **kw):
    """Converged [L, U] for reaching ``target`` before ``stop`` (stop states
    and the sink have value 0)."""
    n = imdp.n_states
    absorbing = np.asarray(imdp.absorbing, bool)
    stop = stop.copy()
    stop[-1] = True
    zero = zero_states(imdp, target, stop | absorbing, controller_max, adversary_max, policy)
    zero &= ~target
    pinned = target | stop | zero | absorbing
    L = np.where(target, 1.0, 0.0)
    U = np.where(target, 1.0, np.where(pinned & ~target, 0.0, 1.0))
    assert L.shape == (n,)
    return _iterate_pair(imdp, L, U, pinned, controller_max, adversary_max, eps, cap, policy, **kw)


def interval_iteration(imdp, spec: Specification, epsilon: Optional[float] = None, cap: int = DEFAULT_CAP,
                       free_upper: bool = False, strict_tol: Optional[float] = None) -> Solution:
    """Infinite-horizon bounds and a stationary controller.

    Synthesis iterates the pessimistic optimum from below and above until the
    gap is at most ``epsilon``; the policy is updated only on strict
    improvement.  The returned lower bound is the pessimistic value of that
    policy and the upper bound its optimistic value, each certified by its
    own converged pair.  ``free_upper`` also returns the optimistic optimum
    over all policies.
    """
    eps = spec.epsilon if epsilon is None else epsilon
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    tol = eps * 1e-3 if strict_tol is None else strict_tol
    target, avoid = _masks(imdp.labels)
    history: list = []
    if spec.kind == "safety":
        # minimise reaching the unsafe set; adversary maximises it
        unsafe = avoid.copy()
        unsafe[-1] = True
        none = np.zeros_like(unsafe)
        L, U, act, it, gap, lm, um = _reach_pair(imdp, unsafe, none, False, True, eps, cap,
                                                 track_policy=True, strict_tol=tol, history=history)
        pol = _clean_policy(act, imdp)
        Lp, Up = _reach_pair(imdp, unsafe, none, False, True, eps, cap, policy=pol)[:2]
        Lo, Uo = _reach_pair(imdp, unsafe, none, False, False, eps, cap, policy=pol)[:2]
        lower = 1.0 - Up
        upper = 1.0 - Lo
        fu = None
        if free_upper:
            fu = 1.0 - _reach_pair(imdp, unsafe, none, False, False, eps, cap)[0]
        sol = Solution(ValueBounds(lower, upper), Policy(pol, True), it, gap, um, lm, fu, history)
        return sol
    L, U, act, it, gap, lm, um = _reach_pair(imdp, target, avoid, True, False, eps, cap,
                                             track_policy=True, strict_tol=tol, history=history)
    pol = _clean_policy(act, imdp)
    lower = _reach_pair(imdp, target, avoid, True, False, eps, cap, policy=pol)[0]
    upper = _reach_pair(imdp, target, avoid, True, True, eps, cap, policy=pol)[1]
    fu = _reach_pair(imdp, target, avoid, True, True, eps, cap)[1] if free_upper else None
    return Solution(ValueBounds(lower, upper), Policy(pol, True), it, gap, lm, um, fu, history)


def _clean_policy(act, imdp):
    pol = np.asarray(act, np.int64).copy()
    pol[np.asarray(imdp.absorbing, bool)] = -1
    pol[-1] = -1
    # states never updated (pinned to zero) take action 0
    pol[(pol < 0) & ~np.asarray(imdp.absorbing, bool)] = 0
    pol[-1] = -1
    return pol


def _fixed_action(pol):
    """Policy array safe to pass to kernels: -1 entries become 0 (those
    states are pinned and never evaluated)."""
    out = pol.copy()
    out[out < 0] = 0
    return out


def value_iteration(imdps, spec: Specification, horizon: Optional[int] = None, policy=None) -> Solution:
    """Finite-horizon bounds and a step-dependent controller.

    ``imdps`` is one IMDP or a sequence used cyclically by step (time-varying
    dynamics); all must share states, actions and labels.  The lower bound
    comes from K pessimistic backups with action maximisation, the upper
    bound from K optimistic backups under the recorded policy.  Passing
    ``policy`` (a :class:`Policy`, or an action array per state or per
    (step, state)) evaluates that controller instead of synthesising one.
    """
    seq = list(imdps) if isinstance(imdps, (list, tuple)) else [imdps]
    K_ = spec.horizon if horizon is None else horizon
    if K_ is None:
        raise ValueError("value iteration needs a finite horizon")
    if K_ < 0:
        raise ValueError("horizon must be non-negative")
    base = seq[0]
    target, avoid = _masks(base.labels)
    absorbing = np.asarray(base.absorbing, bool)
    sink_avoid = avoid.copy()
    sink_avoid[-1] = True
    pinned = absorbing | target | sink_avoid
    if spec.kind == "safety":
        init = np.where(sink_avoid, 0.0, 1.0)
    else:
        init = np.where(target, 1.0, 0.0)
    given = None
    if policy is not None:
        given = np.asarray(policy.actions if isinstance(policy, Policy) else policy, np.int64)
        if given.ndim == 1:
            given = np.broadcast_to(given, (K_, base.n_states))
        if given.shape[1] != base.n_states or (K_ and given.shape[0] < 1):
            raise ValueError("policy does not match the IMDP")
    L = init.copy()
    steps = np.full((K_, base.n_states), -1, np.int64)
    for k in range(K_ - 1, -1, -1):
        m = seq[k % len(seq)]
        fixed = None if given is None else _fixed_action(given[min(k, len(given) - 1)])
        L, act = m.backup(L, pinned, False, True, fixed)
        act = act.copy()
        act[pinned] = -1
        steps[k] = act
    U = init.copy()
    for k in range(K_ - 1, -1, -1):
        m = seq[k % len(seq)]
        U, _ = m.backup(U, pinned, True, True, _fixed_action(steps[k]))
    return Solution(ValueBounds(L, U), Policy(steps, False), K_, 0.0)


def solve(imdps, spec: Specification, **kw) -> Solution:
    """Dispatch on the horizon: finite -> value iteration, else interval iteration."""
    if spec.infinite:
        if isinstance(imdps, (list, tuple)):
            raise ValueError("time-varying dynamics need a finite horizon")
        return interval_iteration(imdps, spec, **kw)
    return value_iteration(imdps, spec)


def summarize(bounds: ValueBounds, labels) -> Summary:
    """Max/mean of the lower bound and mean gap over non-terminal states."""
    labels = np.asarray(labels)
    mask = labels == OTHER
    mask[-1] = False
    n = int(mask.sum())
    if n == 0:
        return Summary(float("nan"), float("nan"), 0.0, 0)
    lo = bounds.lower[mask]
    err = float(np.mean(bounds.upper[mask] - lo))
    return Summary(float(lo.max()), float(lo.mean()), min(max(err, 0.0), 1.0), n)
