"""End-to-end runs: abstraction, synthesis, certification and Monte Carlo."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .. import engine
from ..gridding import AVOID, label_states
from ..models.benchmarks import Benchmark
from ..transitions import build_imdp
from .montecarlo import DEFAULT_MAX_STEPS, monte_carlo


def set_workers(workers: Optional[int]) -> int:
    """Clamp to the threads numba was started with; returns the count used."""
    if workers is None:
        return numba.get_num_threads()
    n = max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@dataclass
class InitialCheck:
    point: list
    state: int
    lower: Optional[float]
    upper: Optional[float]
    mc: Optional[dict] = None
    contained: Optional[bool] = None


@dataclass
class RunRecord:
    """Deterministic outcome of one run; wall-clock timings live in ``timings``
    and are written to a separate file."""

    benchmark: Optional[str] = None
    variant: Optional[str] = None
    kind: Optional[str] = None
    horizon: Optional[int] = None
    epsilon: Optional[float] = None
    counts: dict = field(default_factory=dict)
    memory_bytes: Optional[int] = None
    iterations: Optional[int] = None
    residual: Optional[float] = None
    lower_monotone: Optional[bool] = None
    upper_monotone: Optional[bool] = None
    summary: Optional[dict] = None
    reference: dict = field(default_factory=dict)
    initial: list = field(default_factory=list)
    seed: Optional[int] = None
    runs: Optional[int] = None
    verdict: Optional[str] = None
    timings: dict = field(default_factory=dict)

    def deterministic(self) -> dict:
        d = self.to_dict()
        d.pop("timings")
        return d

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k == "initial":
                v = [dict(c.__dict__) if isinstance(c, InitialCheck) else dict(c) for c in v]
            out[k] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        rec = cls(**known)
        rec.initial = [InitialCheck(**c) for c in rec.initial]
        return rec


@dataclass
class RunArtifacts:
    """Arrays produced alongside a record (values, policy, IMDP)."""

    grid: object = None
    labels: Optional[np.ndarray] = None
    inputs: Optional[np.ndarray] = None
    imdps: Optional[list] = None
    solution: Optional[engine.Solution] = None


class _Clock:
    def __init__(self):
        self.t = {}

    def __call__(self, name):
        clock = self

        class _Span:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                clock.t[name] = clock.t.get(name, 0.0) + max(0.0, time.perf_counter() - self.start)

        return _Span()


def abstract(bench: Benchmark):
    """Grid, labels, inputs and the IMDP(s) of ``bench``."""
    grid = bench.grid()
    labels = label_states(grid, bench.spec)
    inputs = bench.inputs()
    systems = bench.step_systems or ((bench.system,) if bench.system is not None else ())
    imdps = [build_imdp(s, grid, inputs, bench.disturbances(), labels) for s in systems]
    return grid, labels, inputs, imdps


def run_benchmark(bench: Benchmark, seed: int = 0, runs: int = 10_000, epsilon: Optional[float] = None,
                  horizon: Optional[int] = None, cap: int = engine.DEFAULT_CAP, free_upper: bool = False,
                  simulate: bool = True, max_steps: int = DEFAULT_MAX_STEPS):
    """Run ``bench`` end to end.  Returns (RunRecord, RunArtifacts)."""
    spec = bench.spec
    if horizon is not None:
        spec = spec.with_horizon(horizon)
    clock = _Clock()
    rec = RunRecord(bench.name, bench.variant, spec.kind, spec.horizon, epsilon or spec.epsilon,
                    reference=dict(bench.reference), seed=seed, runs=runs if simulate else None)
    with clock("abstraction"):
        grid = bench.grid()
        labels = label_states(grid, spec)
        inputs = bench.inputs()
        rec.counts = {
            "states": grid.n_states,
            "actions": int(len(inputs)),
            "target": labels.n_target,
            "avoid": labels.n_avoid,
        }
        systems = bench.step_systems or ((bench.system,) if bench.system is not None else ())
        imdps = [build_imdp(s, grid, inputs, bench.disturbances(), labels) for s in systems]
    art = RunArtifacts(grid, labels.tags, inputs, imdps)
    if not imdps:
        rec.verdict = "no-dynamics"
        rec.timings = clock.t
        return rec, art
    rec.memory_bytes = int(sum(m.nbytes() for m in imdps))
    with clock("synthesis"):
        if spec.infinite:
            sol = engine.interval_iteration(imdps[0], spec, epsilon=epsilon, cap=cap, free_upper=free_upper)
        else:
            sol = engine.value_iteration(imdps if len(imdps) > 1 else imdps[0], spec)
    art.solution = sol
    rec.iterations = sol.iterations
    rec.residual = sol.residual
    rec.lower_monotone = sol.lower_monotone
    rec.upper_monotone = sol.upper_monotone
    rec.summary = engine.summarize(sol.bounds, imdps[0].labels).to_dict()
    pts = np.asarray(bench.initial_points, float).reshape(-1, grid.dim)
    states = grid.index_of(pts) if len(pts) else np.empty(0, np.int64)
    checks = []
    ok = True
    with clock("simulation"):
        for p, s in zip(pts, states):
            s = int(s)
            lo = float(sol.bounds.lower[s]) if s >= 0 else None
            hi = float(sol.bounds.upper[s]) if s >= 0 else None
            chk = InitialCheck([float(v) for v in p], s, lo, hi)
            if simulate and s >= 0:
                mc = monte_carlo(list(systems), grid, sol.policy, imdps[0].labels, inputs, spec, p,
                                 runs=runs, seed=seed, disturbances=bench.disturbances(),
                                 max_steps=max_steps)
                chk.mc = mc.to_dict()
                chk.contained = bool(mc.contained(lo, hi))
                ok &= chk.contained
            checks.append(chk)
    rec.initial = checks
    inside = [c.lower for c in checks if c.lower is not None]
    rec.summary["initial_max_lower"] = max(inside) if inside else None
    rec.verdict = ("pass" if ok else "fail") if simulate else "not-simulated"
    rec.timings = clock.t
    return rec, art


def value_table(art: RunArtifacts):
    """Per-state rows: index, coordinates, label, lower, upper (sink last)."""
    sol = art.solution
    grid = art.grid
    pts = grid.points()
    rows = []
    for s in range(grid.n_states):
        rows.append([s, *pts[s].tolist(), int(art.labels[s]), float(sol.bounds.lower[s]), float(sol.bounds.upper[s])])
    rows.append([grid.n_states, *([None] * grid.dim), int(AVOID), float(sol.bounds.lower[-1]), float(sol.bounds.upper[-1])])
    header = ["state", *[f"x{d + 1}" for d in range(grid.dim)], "label", "lower", "upper"]
    return header, rows


def policy_table(art: RunArtifacts):
    """Per-state action indices and input values (first step for finite horizons)."""
    sol = art.solution
    grid = art.grid
    pts = grid.points()
    acts = sol.policy.actions
    steps = acts[None, :] if sol.policy.stationary else acts
    header = ["step", "state", *[f"x{d + 1}" for d in range(grid.dim)], "action",
              *[f"u{j + 1}" for j in range(art.inputs.shape[1])]]
    rows = []
    for k, row in enumerate(steps):
        for s in range(grid.n_states):
            a = int(row[s])
            u = art.inputs[a].tolist() if a >= 0 else [None] * art.inputs.shape[1]
            rows.append([k, s, *pts[s].tolist(), a, *u])
    return header, rows
