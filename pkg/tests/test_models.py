import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imdpkit.models import (
    REGISTRY,
    DimensionError,
    NoiseFamily,
    WdnPlant,
    consumption_from_csv,
    eval_mean,
    make_benchmark,
    noise_interval_cdf,
    synth_consumption,
    wdn_pump_power,
    wdn_step,
)
from imdpkit.models.benchmarks import BAS7_A, BAS7_B, BAS7_BW, BAS7_MU, BAS7_Q
from imdpkit.models.wdn import SLOTS_PER_DAY, write_consumption_csv

# hand-written copies of each benchmark's next-state mean, one scalar at a time


def _patrol(x, u, w):
    w = 0.0 if w is None else w[0]
    return [x[0] + 10 * u[0] * math.cos(u[1]) + w, x[1] + 10 * u[0] * math.sin(u[1]) + w]


def _ic2(x, u, w):
    t = 0.1
    return [x[0] + t * x[1] + t * t / 2 * u[0], x[1] + t * u[0]]


def _ic3(x, u, w):
    t = 0.1
    return [
        x[0] + t * x[1] + t**2 / 2 * x[2] + t**3 / 6,
        x[1] + t * x[2] + t**2 / 2,
        x[2] + t,
    ]


def _vdp(x, u, w):
    return [x[0] + 0.1 * x[1], x[1] + 0.1 * (-x[0] + (1 - x[0] ** 2) * x[1]) + u[0]]


def _vehicle(x, u, w):
    ts = 0.1
    alpha = math.atan(math.tan(u[1]) / 2)
    return [
        x[0] + u[0] * math.cos(alpha + x[2]) / math.cos(alpha) * ts,
        x[1] + u[0] * math.sin(alpha + x[2]) / math.cos(alpha) * ts,
        x[2] + u[0] * math.tan(u[1]) * ts,
    ]


def _ba(x, u, w):
    th, te, beta, theta = 45.0, -15.0, 0.06, 0.145
    g = -0.012 * x[0] + 0.8
    return [(1 - beta - theta * g) * x[0] + theta * th * g + beta * te]


def _pd(x, u, w):
    return [0.9 * x[0] + u[0], 0.9 * x[1] + u[1]]


def _bas7(x, u, w):
    w = BAS7_MU if w is None else w
    out = []
    for i in range(7):
        v = sum(BAS7_A[i, j] * x[j] for j in range(7)) + BAS7_B[i] * u[0] + BAS7_Q[i]
        v += sum(BAS7_BW[i, j] * w[j] for j in range(6))
        out.append(v)
    return out


HAND = {
    "patrol-robot": _patrol,
    "ic2": _ic2,
    "ic3": _ic3,
    "vdp": _vdp,
    "vehicle": _vehicle,
    "ba-reduced": _ba,
    "pd-deliver": _pd,
    "pd-return": _pd,
    "bas7d": _bas7,
}


@pytest.mark.parametrize("name", sorted(HAND))
def test_eval_mean_matches_hand_copy(name, rng):
    b = make_benchmark(name)
    s = b.system
    box, ubox = b.state_space.box, b.input_space.box
    for _ in range(10):
        x = rng.uniform(box.lower, box.upper)
        u = rng.uniform(ubox.lower, ubox.upper)
        w = None
        if s.disturbance_space is not None:
            w = rng.uniform(s.disturbance_space.box.lower, s.disturbance_space.box.upper)
        np.testing.assert_allclose(eval_mean(s, x, u, w), HAND[name](x, u, w), rtol=0, atol=1e-12)


def test_eval_mean_patrol_with_disturbance():
    s = make_benchmark("patrol-robot", "coarse-w").system
    np.testing.assert_allclose(eval_mean(s, [0, 0], [1, 0], [0.3]), [10.3, 0.3], atol=1e-12)


def test_wdn_step_systems_match_plant_update():
    b = make_benchmark("wdn")
    plant = WdnPlant()
    q = np.array([0.1, 0.2])
    for k in (0, 30, 77):
        d = float(synth_consumption(0.3, 0.02, 7).prediction[k])
        got = eval_mean(b.step_systems[k], [0.1], q)
        assert got[0] == pytest.approx(float(wdn_step(plant, 0.1, q, d)), abs=1e-12)


@pytest.mark.parametrize(
    "name, x, u, expected",
    [
        ("patrol-robot", [0, 0], [1, 0], [10, 0]),
        ("ic2", [0, 0], [1], [0.005, 0.1]),
        ("vdp", [1, 0], [0], [1, -0.1]),
    ],
)
def test_eval_mean_fixed_points(name, x, u, expected):
    np.testing.assert_allclose(eval_mean(make_benchmark(name).system, x, u), expected, atol=1e-12)


def test_dimension_error_names_argument():
    s = make_benchmark("patrol-robot").system
    with pytest.raises(DimensionError) as exc:
        eval_mean(s, [0, 0, 0], [1, 0])
    assert exc.value.argument == "x"
    assert (exc.value.expected, exc.value.got) == (2, 3)


def test_bas7_mean_is_affine_at_mean_disturbance(rng):
    s = make_benchmark("bas7d").system
    x = rng.uniform(18, 22, size=7)
    u = np.array([17.0])
    np.testing.assert_allclose(eval_mean(s, x, u), BAS7_A @ x + BAS7_B * u[0] + BAS7_Q + BAS7_BW @ BAS7_MU, atol=1e-12)


def test_registry_lookup():
    with pytest.raises(KeyError, match="known"):
        make_benchmark("nope")
    with pytest.raises(KeyError):
        make_benchmark("patrol-robot", "medium")
    assert {"ic2", "patrol-robot", "vehicle", "wdn"} <= set(REGISTRY)


# noise


def test_gaussian_interval_mass_one_sigma():
    n = NoiseFamily.gaussian([1.0])
    assert noise_interval_cdf(n, 0, -1, 1, 0) == pytest.approx(0.682689492, abs=1e-9)
    assert noise_interval_cdf(n, 0, -np.inf, np.inf, 3.0) == 1.0


def test_exponential_mass():
    n = NoiseFamily.exponential([0.1], rate=1.0)
    # mean + 0.1 * Exp(1) on [mean, mean + 0.1] is 1 - e^-1
    assert noise_interval_cdf(n, 0, 2.0, 2.1, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert noise_interval_cdf(n, 0, 0.0, 1.9, 2.0) == 0.0


def test_far_tail_keeps_precision():
    n = NoiseFamily.gaussian([1.0])
    v = noise_interval_cdf(n, 0, 30.0, 31.0, 0.0)
    assert 0 < v < 1e-190


def test_noise_interval_rejects_reversed():
    with pytest.raises(ValueError):
        noise_interval_cdf(NoiseFamily.gaussian([1.0]), 0, 1.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    lo=st.floats(-20, 20),
    width=st.floats(0, 10),
    grow_lo=st.floats(0, 5),
    grow_hi=st.floats(0, 5),
    mean=st.floats(-20, 20),
    sigma=st.floats(0.01, 5),
    kind=st.sampled_from(["gaussian", "exponential"]),
)
def test_interval_mass_monotone_and_bounded(lo, width, grow_lo, grow_hi, mean, sigma, kind):
    n = NoiseFamily.gaussian([sigma]) if kind == "gaussian" else NoiseFamily.exponential([sigma], 1.0)
    inner = noise_interval_cdf(n, 0, lo, lo + width, mean)
    outer = noise_interval_cdf(n, 0, lo - grow_lo, lo + width + grow_hi, mean)
    assert 0.0 <= inner <= 1.0
    assert 0.0 <= outer <= 1.0
    assert outer >= inner - 1e-15


def test_noise_sampling_moments():
    n = NoiseFamily.gaussian([0.5, 2.0])
    z = n.sample(np.random.default_rng(0), 200_000)
    np.testing.assert_allclose(z.std(axis=0), [0.5, 2.0], rtol=0.01)


def test_correlated_sampling_uses_covariance():
    s = make_benchmark("bas7d").system
    z = s.noise.sample(np.random.default_rng(1), 200_000)
    cov = np.cov(z.T)
    np.testing.assert_allclose(cov[2, 3], s.noise.cov[2, 3], rtol=0.05)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseFamily.gaussian([-1.0])
    with pytest.raises(ValueError):
        NoiseFamily("uniform", [1.0])


# water network


def test_wdn_step_hand_values():
    p = WdnPlant()
    # 0.1 + 0.25 * (0.1 + 0.2) - 0.25 * 0.15
    assert float(wdn_step(p, 0.1, [0.1, 0.2], 0.15)) == pytest.approx(0.1375, abs=1e-15)


def test_wdn_step_is_affine(rng):
    p = WdnPlant()
    V, q, d = 0.08, np.array([0.1, 0.05]), 0.12
    h = 1e-3
    base = float(wdn_step(p, V, q, d))
    assert (float(wdn_step(p, V + h, q, d)) - base) / h == pytest.approx(1.0, abs=1e-9)
    assert (float(wdn_step(p, V, q + [h, 0], d)) - base) / h == pytest.approx(p.t_s, abs=1e-9)
    assert (float(wdn_step(p, V, q, d + h)) - base) / h == pytest.approx(-p.t_s, abs=1e-9)


def test_wdn_pump_power_hand_value():
    p = WdnPlant()
    V, q, d = 0.1, np.array([0.2, 0.1]), 0.25
    qs = 0.3 - 0.25
    head = 997.0 * 9.82 * (0.1 / 0.28 + np.array([2.0, 1.5]))
    pressure = np.array([0.35e5 * 0.04, 0.42e5 * 0.01]) + 0.29e5 * qs * qs + head
    expected = np.array([0.2, 0.1]) / 3600 * pressure / np.array([0.9, 0.8])
    np.testing.assert_allclose(wdn_pump_power(p, V, q, d), expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("q, d", [([-0.1, 0.0], 0.1), ([0.0, 0.0], -0.1), ([0.4, 0.0], 0.1)])
def test_wdn_rejects_bad_flows(q, d):
    with pytest.raises(ValueError):
        wdn_step(WdnPlant(), 0.1, q, d)


def test_synth_consumption_is_deterministic():
    a = synth_consumption(daily_peak=0.3, sigma=0.02, seed=7)
    b = synth_consumption(daily_peak=0.3, sigma=0.02, seed=7)
    np.testing.assert_array_equal(a.prediction, b.prediction)
    np.testing.assert_array_equal(a.residuals, b.residuals)
    assert a.prediction.max() == pytest.approx(0.3)


def test_consumption_csv_round_trip(tmp_path):
    prof = synth_consumption(0.3, 0.02, seed=3, days=4)
    path = write_consumption_csv(tmp_path / "c.csv", prof)
    back = consumption_from_csv(path)
    flows = np.clip(prof.prediction + prof.residuals, 0, None)
    np.testing.assert_allclose(back.prediction, flows.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(back.sigma, flows.std(axis=0, ddof=1), atol=1e-12)


def _write(path, rows):
    path.write_text("timestamp,flow\n" + "".join(f"{t},{f}\n" for t, f in rows))
    return path


def test_consumption_csv_errors(tmp_path):
    from datetime import datetime, timedelta

    t0 = datetime(2025, 1, 1)
    good = [((t0 + timedelta(minutes=15 * k)).isoformat(), 0.1) for k in range(SLOTS_PER_DAY)]
    assert consumption_from_csv(_write(tmp_path / "ok.csv", good)).sigma.max() == 0.0
    with pytest.raises(ValueError, match="full day"):
        consumption_from_csv(_write(tmp_path / "short.csv", good[:10]))
    bad = list(good)
    bad[5] = (bad[5][0], -0.1)
    with pytest.raises(ValueError, match="negative"):
        consumption_from_csv(_write(tmp_path / "neg.csv", bad))
    gap = good[:40] + good[41:] + [((t0 + timedelta(minutes=15 * 96)).isoformat(), 0.1)]
    with pytest.raises(ValueError, match="cadence"):
        consumption_from_csv(_write(tmp_path / "gap.csv", gap))


@pytest.mark.parametrize(
    "V, q, d, expected",
    [(0.1, (0.2, 0.2), 0.3, 0.125), (0.07, (0.0, 0.0), 0.0, 0.07), (0.028, (0.0, 0.0), 0.3, -0.047)],
)
def test_wdn_step_examples(V, q, d, expected):
    assert float(wdn_step(WdnPlant(), V, q, d)) == pytest.approx(expected, abs=1e-15)


def test_wdn_power_examples():
    p = WdnPlant()
    np.testing.assert_array_equal(wdn_pump_power(p, 0.1, [0.0, 0.0], 0.1), [0.0, 0.0])
    # combined-resistance term vanishes when the net flow is zero
    P1 = 0.2 / 3600 * (0.35e5 * 0.04 + 997.0 * 9.82 * (0.14 / 0.28 + 2.0)) / 0.9
    assert wdn_pump_power(p, 0.14, [0.2, 0.0], 0.2)[0] == pytest.approx(P1, abs=1e-12)
    # V=0.10, q=(0.3, 0.3), d=0.1: q_sum = 0.5
    head = 997.0 * 9.82 * (0.1 / 0.28)
    P = [
        0.3 / 3600 * (0.35e5 * 0.09 + 0.29e5 * 0.25 + head + 997.0 * 9.82 * 2.0) / 0.9,
        0.3 / 3600 * (0.42e5 * 0.09 + 0.29e5 * 0.25 + head + 997.0 * 9.82 * 1.5) / 0.8,
    ]
    np.testing.assert_allclose(wdn_pump_power(p, 0.1, [0.3, 0.3], 0.1), P, rtol=0, atol=1e-9)


def test_exponential_support_is_one_sided():
    n = NoiseFamily.exponential([0.1], rate=1.0)
    assert noise_interval_cdf(n, 0, 20.0, np.inf, 20.0) == 1.0


def test_two_day_sample_spread(tmp_path):
    from datetime import datetime, timedelta

    t0 = datetime(2025, 3, 1)
    rows = [((t0 + timedelta(minutes=15 * k)).isoformat(), 0.1 if k < SLOTS_PER_DAY else 0.3)
            for k in range(2 * SLOTS_PER_DAY)]
    prof = consumption_from_csv(_write(tmp_path / "two.csv", rows))
    assert prof.prediction[5] == pytest.approx(0.2)
    assert prof.sigma[5] == pytest.approx(0.141421, abs=1e-6)


def test_wdn_rollout_reports_extraction():
    from imdpkit.models import wdn_rollout

    plant = WdnPlant()
    prof = synth_consumption(0.2, 0.0, seed=1, days=1)
    r = wdn_rollout(plant, prof, lambda k, V: (0.3, 0.3), 0.1, SLOTS_PER_DAY, np.random.default_rng(0))
    # full flow for a day: 0.3 * 24 = 7.2 m^3 per pump, above the 3.6 limit
    np.testing.assert_allclose(r.extraction, [7.2, 7.2])
    assert r.tyel_exceeded(plant).all()
    np.testing.assert_allclose(np.diff(r.volume), 0.25 * (0.6 - r.demand))
    assert np.all(r.energy_kwh() > 0)
    idle = wdn_rollout(plant, prof, lambda k, V: (0.0, 0.0), 0.1, 8, np.random.default_rng(0))
    assert not idle.tyel_exceeded(plant).any() and np.all(idle.energy_kwh() == 0)
