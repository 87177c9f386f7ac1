"""Benchmark registry: dynamics, spaces, regions and horizons by name."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..gridding import Grid, Specification, build_grid, build_input_grid
from .noise import NoiseFamily
from .systems import Box, Space, StochasticSystem, cos_range, scaled_range, sin_range
from .wdn import SLOTS_PER_DAY, ConsumptionProfile, WdnPlant, synth_consumption


@dataclass(frozen=True)
class Benchmark:
    name: str
    variant: str
    system: Optional[StochasticSystem]
    spec: Specification
    state_space: Space
    input_space: Space
    initial_points: np.ndarray
    cell_counts: Optional[tuple] = None
    step_systems: Optional[tuple] = None
    reference: dict = field(default_factory=dict)

    def grid(self) -> Grid:
        s = self.state_space
        if self.cell_counts is not None:
            return Grid.from_counts(s.box.lower, s.box.upper, self.cell_counts)
        return build_grid(s.box.lower, s.box.upper, s.eta)

    def inputs(self) -> np.ndarray:
        s = self.input_space
        return build_input_grid(s.box.lower, s.box.upper, s.eta)

    def disturbances(self) -> Optional[np.ndarray]:
        if self.system is None or self.system.disturbance_space is None:
            return None
        s = self.system.disturbance_space
        return build_input_grid(s.box.lower, s.box.upper, s.eta)

    def systems_for_horizon(self):
        """One system per step for time-varying benchmarks, else None."""
        return self.step_systems


def _sq(lo, hi, d=2):
    return Box([lo] * d, [hi] * d)


# patrol robot --------------------------------------------------------------


def _patrol_mean(x, u, w):
    u = np.atleast_2d(u)
    step = 10.0 * u[:, :1] * np.hstack([np.cos(u[:, 1:2]), np.sin(u[:, 1:2])])
    out = x + step
    if w is not None:
        out = out + np.atleast_2d(w)[:, :1]
    return out


def patrol_robot(variant: str) -> Benchmark:
    fine = variant.startswith("fine")
    with_w = variant.endswith("-w")
    eta_x = 0.5 if fine else 1.0
    eta_u = 0.1 if fine else 0.2
    system = StochasticSystem(
        name="patrol-robot",
        state_dim=2,
        input_space=Space.make([-1, -1], [1, 1], [eta_u, eta_u]),
        disturbance_space=Space.make([-0.5], [0.5], [0.1]) if with_w else None,
        mean_fn=_patrol_mean,
        noise=NoiseFamily.gaussian(np.sqrt([0.75, 0.75])),
        affine_A=np.eye(2),
    )
    spec = Specification(
        kind="reach-avoid" if fine or with_w else "reach",
        target=(_sq(5, 7),),
        avoid=(_sq(-2, 2),),
        horizon=None,
    )
    ref = {("fine", False): 0.81, ("fine", True): 0.64, ("coarse", False): 0.65, ("coarse", True): 0.47}
    return Benchmark(
        "patrol-robot",
        variant,
        system,
        spec,
        Space.make([-10, -10], [10, 10], [eta_x, eta_x]),
        system.input_space,
        np.array([[-8.0, -8.0], [-6.0, 4.0], [0.0, -6.0], [8.0, -8.0], [3.0, 3.0]]),
        reference={"Phi": ref[("fine" if fine else "coarse", with_w)]},
    )


# integrator chains -------------------------------------------------------------

NS = 0.1


def _ic2_mean(x, u, w):
    u = np.atleast_2d(u)
    x1 = x[:, 0] + NS * x[:, 1] + NS**2 / 2 * u[:, 0]
    x2 = x[:, 1] + NS * u[:, 0]
    return np.stack([x1, x2], axis=1)


def ic2(variant: str) -> Benchmark:
    system = StochasticSystem(
        name="ic2",
        state_dim=2,
        input_space=Space.make([-1], [1], [0.5]),
        mean_fn=_ic2_mean,
        noise=NoiseFamily.gaussian(np.sqrt([0.1, 0.1])),
        affine_A=np.array([[1.0, NS], [0.0, 1.0]]),
    )
    spec = Specification("reach", target=(_sq(-8, 8),), horizon=5)
    return Benchmark(
        "ic2",
        variant,
        system,
        spec,
        Space.make([-10, -10], [10, 10], [0.5, 0.5]),
        system.input_space,
        np.array([[-9.5, -9.5], [-9.0, 0.0], [0.0, 9.5], [9.5, 9.5], [8.5, -8.5]]),
    )


def _ic3_mean(x, u, w):
    x1 = x[:, 0] + NS * x[:, 1] + NS**2 / 2 * x[:, 2] + NS**3 / 6
    x2 = x[:, 1] + NS * x[:, 2] + NS**2 / 2
    x3 = x[:, 2] + NS
    return np.stack([x1, x2, x3], axis=1)


def _outside_box(outer: Box, inner: Box):
    """Closed slabs covering outer minus the interior of inner."""
    slabs = []
    for d in range(outer.dim):
        lo, hi = outer.lower.copy(), outer.upper.copy()
        hi[d] = inner.lower[d]
        slabs.append(Box(lo, hi.copy()))
        lo, hi = outer.lower.copy(), outer.upper.copy()
        lo[d] = inner.upper[d]
        slabs.append(Box(lo, hi))
    return tuple(slabs)


def ic3(variant: str) -> Benchmark:
    A = np.array([[1.0, NS, NS**2 / 2], [0.0, 1.0, NS], [0.0, 0.0, 1.0]])
    system = StochasticSystem(
        name="ic3",
        state_dim=3,
        input_space=Space.make([0.0], [0.0], [1.0]),
        mean_fn=_ic3_mean,
        noise=NoiseFamily.gaussian(np.sqrt([0.1, 0.1, 0.1])),
        affine_A=A,
    )
    X = Box([-11] * 3, [11] * 3)
    spec = Specification("safety", avoid=_outside_box(X, Box([-10.1] * 3, [10.1] * 3)), horizon=5)
    return Benchmark(
        "ic3",
        variant,
        system,
        spec,
        Space.make(X.lower, X.upper, [0.5] * 3),
        system.input_space,
        np.array([[0.0, 0.0, 0.0], [-9.5, 9.5, 0.0], [9.0, 9.0, 9.0]]),
    )


# Van der Pol -------------------------------------------------------------------

TAU = 0.1


def _vdp_mean(x, u, w):
    u = np.atleast_2d(u)
    x1, x2 = x[:, 0], x[:, 1]
    return np.stack([x1 + TAU * x2, x2 + TAU * (-x1 + (1 - x1**2) * x2) + u[:, 0]], axis=1)


def _vdp_range(lo, hi, u, w):
    u = np.atleast_2d(u)
    m1_lo = lo[:, 0] + TAU * lo[:, 1]
    m1_hi = hi[:, 0] + TAU * hi[:, 1]
    # second component is affine in x2 and quadratic in x1: candidates are the
    # x2 faces crossed with the x1 endpoints and the parabola vertex
    cands = []
    for x2 in (lo[:, 1], hi[:, 1]):
        with np.errstate(divide="ignore", invalid="ignore"):
            vertex = np.where(x2 != 0, -1.0 / (2.0 * x2), lo[:, 0])
        vertex = np.clip(vertex, lo[:, 0], hi[:, 0])
        for x1 in (lo[:, 0], hi[:, 0], vertex):
            cands.append(x2 + TAU * (-x1 + (1 - x1**2) * x2) + u[:, 0])
    c = np.stack(cands)
    return np.stack([m1_lo, c.min(axis=0)], axis=1), np.stack([m1_hi, c.max(axis=0)], axis=1)


def vdp(variant: str) -> Benchmark:
    system = StochasticSystem(
        name="vdp",
        state_dim=2,
        input_space=Space.make([-1], [1], [0.25]),
        mean_fn=_vdp_mean,
        noise=NoiseFamily.gaussian(np.sqrt([0.2, 0.2])),
        mean_range_fn=_vdp_range,
        sampling_time=TAU,
    )
    spec = Specification("reach", target=(Box([-1.4, -2.9], [-0.7, -2.0]),), horizon=None)
    return Benchmark(
        "vdp",
        variant,
        system,
        spec,
        Space.make([-3, -3], [3, 3], [0.2, 0.2]),
        system.input_space,
        np.array([[0.0, 0.0], [1.0, 1.0], [-2.0, 2.0], [2.0, -2.0]]),
    )


# reduced autonomous vehicle --------------------------------------------------------

TS_VEHICLE = 0.1


def _vehicle_terms(u):
    u = np.atleast_2d(u)
    alpha = np.arctan(np.tan(u[:, 1]) / 2.0)
    gain = u[:, 0] * TS_VEHICLE / np.cos(alpha)
    turn = u[:, 0] * np.tan(u[:, 1]) * TS_VEHICLE
    return alpha, gain, turn


def _vehicle_mean(x, u, w):
    alpha, gain, turn = _vehicle_terms(u)
    th = alpha + x[:, 2]
    return np.stack([x[:, 0] + gain * np.cos(th), x[:, 1] + gain * np.sin(th), x[:, 2] + turn], axis=1)


def _vehicle_range(lo, hi, u, w):
    alpha, gain, turn = _vehicle_terms(u)
    c_lo, c_hi = scaled_range(*cos_range(alpha + lo[:, 2], alpha + hi[:, 2]), gain)
    s_lo, s_hi = scaled_range(*sin_range(alpha + lo[:, 2], alpha + hi[:, 2]), gain)
    mlo = np.stack([lo[:, 0] + c_lo, lo[:, 1] + s_lo, lo[:, 2] + turn], axis=1)
    mhi = np.stack([hi[:, 0] + c_hi, hi[:, 1] + s_hi, hi[:, 2] + turn], axis=1)
    return mlo, mhi


def vehicle(variant: str) -> Benchmark:
    coarse = variant in ("coarse", "reduced")
    eta_x = [0.5, 0.5, 0.4 if coarse else 0.2]
    if variant == "reduced":
        eta_x = [1.0, 1.0, 0.85]
    eta_u = [1.0, 0.2] if coarse else [0.5, 0.1]
    system = StochasticSystem(
        name="vehicle",
        state_dim=3,
        input_space=Space.make([-1, -0.4], [4, 0.4], eta_u),
        mean_fn=_vehicle_mean,
        noise=NoiseFamily.gaussian(np.sqrt([2 / 3] * 3)),
        mean_range_fn=_vehicle_range,
        sampling_time=TS_VEHICLE,
    )
    spec = Specification(
        "reach-avoid",
        target=(Box([-5.75, -0.25, -3.45], [0.25, 5.75, 3.45]),),
        avoid=(Box([-5.75, -0.75, -3.45], [0.25, -0.25, 3.45]),),
        horizon=None,
    )
    return Benchmark(
        "vehicle",
        variant if coarse else "standard",
        system,
        spec,
        Space.make([-5, -5, -3.4], [5, 5, 3.4], eta_x),
        system.input_space,
        np.array([[3.0, -3.0, 0.2], [2.0, 2.0, 1.8], [-3.0, -3.0, -1.4], [4.0, 4.0, 3.0]]),
        reference={"Phi": 0.99},
    )


# reduced building automation (discrete time) ---------------------------------------

BA = dict(T_h=45.0, T_e=-15.0, beta=0.06, theta=0.145, R=0.1)


def _ba_mean(x, u, w):
    t = x[:, 0]
    g = -0.012 * t + 0.8
    out = (1 - BA["beta"] - BA["theta"] * g) * t + BA["theta"] * BA["T_h"] * g + BA["beta"] * BA["T_e"]
    return out[:, None]


def _ba_range(lo, hi, u, w):
    # quadratic in x: extremes at the endpoints or the vertex
    a = BA["theta"] * 0.012
    b = 1 - BA["beta"] - 0.8 * BA["theta"] - 0.012 * BA["theta"] * BA["T_h"]
    vertex = np.clip(-b / (2 * a), lo[:, 0], hi[:, 0])
    c = np.stack([_ba_mean(p[:, None], u, w)[:, 0] for p in (lo[:, 0], hi[:, 0], vertex)])
    return c.min(axis=0)[:, None], c.max(axis=0)[:, None]


def ba_reduced(variant: str, horizon: int = 10) -> Benchmark:
    system = StochasticSystem(
        name="ba-reduced",
        state_dim=1,
        input_space=Space.make([0.0], [0.0], [1.0]),
        mean_fn=_ba_mean,
        noise=NoiseFamily.exponential([BA["R"]], rate=1.0),
        mean_range_fn=_ba_range,
    )
    spec = Specification("safety", avoid=(Box([1], [17]), Box([23], [50])), horizon=horizon)
    return Benchmark(
        "ba-reduced",
        variant,
        system,
        spec,
        Space.make([1], [50], [0.1]),
        system.input_space,
        np.array([[19.5], [19.7], [20.0]]),
        reference={"Lambda": 0.99, "initial_set": [19.5, 20.0]},
    )


# package delivery ------------------------------------------------------------------

PD_P1 = Box([5, -1], [6, 1])
PD_P2 = Box([0, -5], [1, 1])
PD_P3 = Box([-4, -4], [-2, -3])


def _pd_mean(x, u, w):
    return 0.9 * x + np.atleast_2d(u)


def package_delivery(leg: str) -> Callable[[str], Benchmark]:
    def make(variant: str) -> Benchmark:
        system = StochasticSystem(
            name=f"pd-{leg}",
            state_dim=2,
            input_space=Space.make([-1, -1], [1, 1], [0.1, 0.1]),
            mean_fn=_pd_mean,
            noise=NoiseFamily.gaussian(np.sqrt([0.2, 0.2])),
            affine_A=0.9 * np.eye(2),
        )
        target = PD_P3 if leg == "deliver" else PD_P1
        start = [[5.5, 0.0], [5.0, -4.0]] if leg == "deliver" else [[-3.0, -3.5], [-4.0, 4.0]]
        spec = Specification("reach-avoid", target=(target,), avoid=(PD_P2,), horizon=None)
        return Benchmark(
            f"pd-{leg}",
            variant,
            system,
            spec,
            Space.make([-6, -6], [6, 6], [0.5, 0.5]),
            system.input_space,
            np.array(start),
        )

    return make


# seven-dimensional building automation ---------------------------------------------

BAS7_A = np.array(
    [
        [0.9678, 0, 0.0036, 0, 0.0036, 0, 0.0036],
        [0, 0.9682, 0, 0.0034, 0, 0.0034, 0.0034],
        [0.0106, 0, 0.9494, 0, 0, 0, 0],
        [0, 0.0097, 0, 0.9523, 0, 0, 0],
        [0.0106, 0, 0, 0, 0.9494, 0, 0],
        [0, 0.0097, 0, 0, 0, 0.9523, 0],
        [0.0106, 0.0097, 0, 0, 0, 0, 0.9794],
    ]
)
BAS7_B = np.array([0.0195, 0.0200, 0.0, 0.0, 0.0, 0.0, 0.0])
BAS7_BW = np.array(
    [
        [0, 0, 0.0000, 0, 0.0019, 0],
        [0, 0, 0, 0.0000, 0, 0.0015],
        [0.0459, 0, 0, 0, 0, 0],
        [0.0425, 0, 0, 0, 0, 0],
        [0, 0.0397, 0, 0, 0, 0],
        [0, 0.0377, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0],
    ]
)
BAS7_Q = np.array([0.0493, -0.0055, 0.0387, 0.0189, 0.011, 0.0108, 0.0109])
BAS7_MU = np.array([9.0, 15.0, 500.0, 500.0, 35.0, 35.0])
BAS7_SIGMA = np.diag([1.0, 1.0, 100.0, 100.0, 5.0, 5.0])


def _bas7_mean(x, u, w):
    u = np.atleast_2d(u)
    w = BAS7_MU if w is None else w
    return x @ BAS7_A.T + u[:, :1] * BAS7_B + BAS7_Q + BAS7_BW @ np.asarray(w, float).reshape(-1)


def _dependence_groups(cov: np.ndarray) -> tuple:
    n = cov.shape[0]
    group = list(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if cov[i, j] != 0.0:
                gi, gj = group[i], group[j]
                group = [gi if g == gj else g for g in group]
    relabel = {g: k for k, g in enumerate(dict.fromkeys(group))}
    return tuple(relabel[g] for g in group)


def bas7d(variant: str) -> Benchmark:
    cov = BAS7_BW @ BAS7_SIGMA @ BAS7_BW.T
    noise = NoiseFamily("gaussian", np.sqrt(np.diag(cov)), groups=_dependence_groups(cov), cov=cov)
    system = StochasticSystem(
        name="bas7d",
        state_dim=7,
        input_space=Space.make([15], [22], [1.0]),
        mean_fn=_bas7_mean,
        noise=noise,
        affine_A=BAS7_A,
    )
    lower = [19.5, 19.0] + [18.0] * 5
    upper = [20.5, 22.0] + [22.0] * 5
    spec = Specification("safety", horizon=6)
    return Benchmark(
        "bas7d",
        variant,
        system,
        spec,
        Space.make(lower, upper, [0.25, 0.75] + [2.0] * 5),
        system.input_space,
        np.array([[20.0, 20.5, 20.0, 20.0, 20.0, 20.0, 20.0]]),
    )


# anaesthesia (grid fixture only) ---------------------------------------------------


def as_grid_only(variant: str) -> Benchmark:
    spec = Specification("reach", target=(Box([4, 8, 8], [6, 10, 10]),), horizon=10)
    return Benchmark(
        "as-grid-only",
        variant,
        None,
        spec,
        Space.make([1, 0, 0], [6, 10, 10], [0.25, 1, 1]),
        Space.make([0, 0], [7, 30], [1, 30]),
        np.empty((0, 3)),
    )


# water distribution network ------------------------------------------------------


def wdn_systems(plant: WdnPlant, profile: ConsumptionProfile, eta_q: float = 0.05):
    """One system per 15-minute slot; the slot's demand is the noise channel."""
    inputs = Space.make([0, 0], [plant.q_max, plant.q_max], [eta_q, eta_q])
    systems = []
    for k in range(SLOTS_PER_DAY):
        pred = float(profile.prediction[k])

        def mean(x, u, w, pred=pred):
            u = np.atleast_2d(u)
            return x + plant.t_s * u.sum(axis=1, keepdims=True) - plant.t_s * pred

        systems.append(
            StochasticSystem(
                name=f"wdn[{k}]",
                state_dim=1,
                input_space=inputs,
                mean_fn=mean,
                noise=NoiseFamily.gaussian([plant.t_s * profile.sigma[k]]),
                affine_A=np.eye(1),
                sampling_time=plant.t_s,
            )
        )
    return tuple(systems)


def wdn(variant: str, profile: Optional[ConsumptionProfile] = None, plant: Optional[WdnPlant] = None) -> Benchmark:
    plant = plant or WdnPlant()
    profile = profile or synth_consumption(daily_peak=0.3, sigma=0.02, seed=7)
    systems = wdn_systems(plant, profile)
    spec = Specification("safety", horizon=SLOTS_PER_DAY)
    return Benchmark(
        "wdn",
        variant,
        systems[0],
        spec,
        Space.make([plant.V_min], [plant.V_max], [0.001]),
        systems[0].input_space,
        np.array([[0.06], [0.09], [0.12]]),
        step_systems=systems,
        reference={"zero_pump_action": 0},
    )


REGISTRY: dict = {
    "patrol-robot": ({"fine", "fine-w", "coarse", "coarse-w"}, patrol_robot, "coarse"),
    "ic2": ({"default"}, ic2, "default"),
    "ic3": ({"default"}, ic3, "default"),
    "vdp": ({"default"}, vdp, "default"),
    "vehicle": ({"standard", "coarse", "reduced"}, vehicle, "coarse"),
    "ba-reduced": ({"default"}, ba_reduced, "default"),
    "pd-deliver": ({"default"}, package_delivery("deliver"), "default"),
    "pd-return": ({"default"}, package_delivery("return"), "default"),
    "bas7d": ({"default"}, bas7d, "default"),
    "as-grid-only": ({"default"}, as_grid_only, "default"),
    "wdn": ({"default"}, wdn, "default"),
}


def make_benchmark(name: str, variant: Optional[str] = None) -> Benchmark:
    """Look up a benchmark by registry id and variant."""
    if name not in REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}; known: {', '.join(sorted(REGISTRY))}")
    variants, factory, default = REGISTRY[name]
    variant = default if variant in (None, "") else variant
    if variant not in variants:
        raise KeyError(f"unknown variant {variant!r} for {name}; known: {', '.join(sorted(variants))}")
    return factory(variant)
