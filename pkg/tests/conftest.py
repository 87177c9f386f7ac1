import functools

import numpy as np
import pytest

from imdpkit.gridding import label_states
from imdpkit.models import make_benchmark
from imdpkit.transitions import build_imdp


@functools.lru_cache(maxsize=None)
def built(name, variant=None):
    """(benchmark, grid, labels, inputs, imdps), cached per session."""
    b = make_benchmark(name, variant)
    g = b.grid()
    labels = label_states(g, b.spec)
    inputs = b.inputs()
    systems = b.step_systems or ((b.system,) if b.system is not None else ())
    imdps = tuple(build_imdp(s, g, inputs, b.disturbances(), labels) for s in systems)
    return b, g, labels, inputs, imdps


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
