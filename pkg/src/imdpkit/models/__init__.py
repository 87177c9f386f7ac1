from .benchmarks import REGISTRY, Benchmark, make_benchmark
from .noise import NoiseFamily, noise_interval_cdf
from .systems import Box, DimensionError, Space, StochasticSystem, eval_mean
from .wdn import (
    ConsumptionProfile,
    WdnPlant,
    consumption_from_csv,
    synth_consumption,
    WdnRollout,
    wdn_pump_power,
    wdn_rollout,
    wdn_step,
)

__all__ = [
    "REGISTRY",
    "Benchmark",
    "Box",
    "ConsumptionProfile",
    "DimensionError",
    "NoiseFamily",
    "Space",
    "StochasticSystem",
    "WdnPlant",
    "consumption_from_csv",
    "eval_mean",
    "make_benchmark",
    "noise_interval_cdf",
    "synth_consumption",
    "WdnRollout",
    "wdn_pump_power",
    "wdn_rollout",
    "wdn_step",
]
