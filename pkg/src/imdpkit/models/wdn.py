"""Water distribution network: one elevated tower fed by two pump stations.

Units follow the plant tables: volumes in m^3, flows in m^3/h, time in h,
pipe resistances in Pa h^2 m^-6.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

SLOT_MINUTES = 15
SLOTS_PER_DAY = 24 * 60 // SLOT_MINUTES


@dataclass(frozen=True)
class WdnPlant:
    A_t: float = 0.28
    h: tuple = (2.0, 1.5)
    r_f: tuple = (0.35e5, 0.42e5)
    r_f_sigma: float = 0.29e5
    eta: tuple = (0.90, 0.80)
    q_max: float = 0.3
    V_min: float = 0.028
    V_max: float = 0.155
    tyel: tuple = (3.6, 3.6)
    t_s: float = 0.25
    rho_w: float = 997.0
    g0: float = 9.82

    def __post_init__(self):
        if not 0 < self.V_min < self.V_max:
            raise ValueError("need 0 < V_min < V_max")
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        if any(not 0 < e <= 1 for e in self.eta):
            raise ValueError("pump efficiencies must lie in (0, 1]")
        if not len(self.h) == len(self.r_f) == len(self.eta) == len(self.tyel):
            raise ValueError("per-pump parameters must have equal length")

    @property
    def n_pumps(self) -> int:
        return len(self.eta)


def _check_flows(plant: WdnPlant, q, d):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != plant.n_pumps:
        raise ValueError(f"expected {plant.n_pumps} pump flows, got {q.shape[-1]}")
    if np.any(q < 0):
        raise ValueError("pump flows must be non-negative")
    if np.any(q > plant.q_max * (1 + 1e-12)):
        raise ValueError(f"pump flows must not exceed q_max={plant.q_max}")
    if np.any(np.asarray(d) < 0):
        raise ValueError("demand must be non-negative")
    return q


def wdn_step(plant: WdnPlant, V, q, d):
    """Forward-Euler volume update over one sampling interval; no clamping."""
    q = _check_flows(plant, q, d)
    return V + plant.t_s * q.sum(axis=-1) - plant.t_s * np.asarray(d, dtype=float)


def wdn_pump_power(plant: WdnPlant, V, q, d) -> np.ndarray:
    """Electrical power drawn by each pump station, in W.

    Pressures come out in Pa with flows in m^3/h; the leading flow factor is
    converted to m^3/s so the product is a power.
    """
    q = _check_flows(plant, q, d)
    q_sigma = q.sum() - float(d)
    h_v = V / plant.A_t
    r_f = np.asarray(plant.r_f)
    h = np.asarray(plant.h)
    eta = np.asarray(plant.eta)
    pressure = (
        r_f * np.abs(q) * q
        + plant.r_f_sigma * abs(q_sigma) * q_sigma
        + plant.rho_w * plant.g0 * (h_v + h)
    )
    return (q / 3600.0) * pressure / eta


@dataclass(frozen=True)
class ConsumptionProfile:
    """Per 15-minute slot demand prediction [m^3/h] and residual spread."""

    prediction: np.ndarray
    sigma: np.ndarray
    residuals: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        pred = np.asarray(self.prediction, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        if pred.shape != (SLOTS_PER_DAY,) or sig.shape != pred.shape:
            raise ValueError(f"profiles need {SLOTS_PER_DAY} slots")
        if np.any(pred < 0) or np.any(sig < 0):
            raise ValueError("demand and spread must be non-negative")
        object.__setattr__(self, "prediction", pred)
        object.__setattr__(self, "sigma", sig)

    def to_rows(self):
        for k in range(SLOTS_PER_DAY):
            minutes = k * SLOT_MINUTES
            yield f"{minutes // 60:02d}:{minutes % 60:02d}", self.prediction[k], self.sigma[k]


def _parse_time(text: str) -> datetime:
    return datetime.fromisoformat(text.strip())


def consumption_from_csv(path) -> ConsumptionProfile:
    """Aggregate a (timestamp, flow) series sampled every 15 minutes into a
    per-slot mean and sample standard deviation."""
    times, flows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            try:
                t = _parse_time(row[0])
            except ValueError:
                if not times:  # header line
                    continue
                raise
            times.append(t)
            flows.append(float(row[1]))
    if len(times) < SLOTS_PER_DAY:
        raise ValueError(f"need at least one full day ({SLOTS_PER_DAY} samples), got {len(times)}")
    flows = np.asarray(flows)
    if np.any(flows < 0):
        raise ValueError("negative flow in consumption data")
    step = timedelta(minutes=SLOT_MINUTES)
    for a, b in zip(times, times[1:]):
        if b - a != step:
            raise ValueError(f"irregular cadence between {a} and {b}")
    slots = np.array([(t.hour * 60 + t.minute) // SLOT_MINUTES for t in times])
    if any(t.minute % SLOT_MINUTES or t.second for t in times):
        raise ValueError("timestamps must fall on 15-minute boundaries")
    pred = np.zeros(SLOTS_PER_DAY)
    sigma = np.zeros(SLOTS_PER_DAY)
    for k in range(SLOTS_PER_DAY):
        vals = flows[slots == k]
        pred[k] = vals.mean()
        sigma[k] = vals.std(ddof=1) if vals.size > 1 else 0.0
    n_days = len(flows) // SLOTS_PER_DAY
    residuals = None
    if slots[0] == 0 and n_days:
        residuals = flows[: n_days * SLOTS_PER_DAY].reshape(n_days, SLOTS_PER_DAY) - pred
    return ConsumptionProfile(pred, sigma, residuals)


def daily_shape(n_slots: int = SLOTS_PER_DAY) -> np.ndarray:
    """Two-peak daily demand shape normalised to a maximum of one
    (morning and evening peaks, night and midday troughs)."""
    t = np.arange(n_slots) * 24.0 / n_slots
    shape = 0.55 + 0.45 * np.cos(2 * np.pi * 2 * (t - 7.5) / 24.0)
    return shape / shape.max()


def synth_consumption(daily_peak: float, sigma: float, seed: int, days: int = 7) -> ConsumptionProfile:
    """Synthetic stand-in for measured consumption: a two-peak daily profile
    with i.i.d. Gaussian residuals drawn for ``days`` days."""
    if daily_peak <= 0 or sigma < 0:
        raise ValueError("daily_peak must be positive and sigma non-negative")
    pred = daily_peak * daily_shape()
    rng = np.random.default_rng(seed)
    residuals = rng.normal(0.0, sigma, size=(days, SLOTS_PER_DAY))
    return ConsumptionProfile(pred, np.full(SLOTS_PER_DAY, float(sigma)), residuals)


def write_consumption_csv(path, profile: ConsumptionProfile, start="2025-01-01T00:00:00"):
    """Write the synthetic days of ``profile`` as a (timestamp, flow) series."""
    if profile.residuals is None:
        raise ValueError("profile carries no residual samples to write")
    t0 = _parse_time(start)
    flows = np.clip(profile.prediction + profile.residuals, 0.0, None).reshape(-1)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "flow_m3_per_h"])
        for k, f in enumerate(flows):
            w.writerow([(t0 + timedelta(minutes=SLOT_MINUTES * k)).isoformat(), repr(float(f))])
    return path


@dataclass
class WdnRollout:
    volume: np.ndarray       # (steps + 1,)
    flows: np.ndarray        # (steps, n_pumps)
    demand: np.ndarray       # (steps,)
    power: np.ndarray        # (steps, n_pumps) in W
    extraction: np.ndarray   # cumulative pumped volume per pump, m^3
    dt: float = 0.25         # h

    def energy_kwh(self) -> np.ndarray:
        return self.power.sum(axis=0) * self.dt / 1000.0

    def tyel_exceeded(self, plant: WdnPlant) -> np.ndarray:
        """Whether the pumped volume beats the daily limit scaled to the
        rollout length. Reported only; synthesis does not enforce it."""
        days = len(self.demand) * self.dt / 24.0
        return self.extraction > np.asarray(plant.tyel) * days


def wdn_rollout(plant: WdnPlant, profile: ConsumptionProfile, controller, V0: float,
                steps: int, rng: np.random.Generator, start_slot: int = 0) -> WdnRollout:
    """Simulate the tank under ``controller(k, V) -> q`` with demand drawn
    from the profile (clipped at zero)."""
    V = np.empty(steps + 1)
    V[0] = V0
    q_all = np.zeros((steps, plant.n_pumps))
    d_all = np.zeros(steps)
    p_all = np.zeros((steps, plant.n_pumps))
    for k in range(steps):
        slot = (start_slot + k) % SLOTS_PER_DAY
        d = max(0.0, profile.prediction[slot] + profile.sigma[slot] * rng.standard_normal())
        q = np.asarray(controller(k, V[k]), dtype=float)
        q_all[k], d_all[k] = q, d
        p_all[k] = wdn_pump_power(plant, V[k], q, d)
        V[k + 1] = wdn_step(plant, V[k], q, d)
    return WdnRollout(V, q_all, d_all, p_all, plant.t_s * q_all.sum(axis=0), plant.t_s)
