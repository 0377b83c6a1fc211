import numpy as np
import pytest

MICRO_CFG = """
name: dicenet-micro
width_scale: 0.1
input_size: 32
classes: 10
stages {
  repeats: [1, 1]
  channels: [16, 32]
}
pool_width: 64
"""

SEPARABLE_MICRO_CFG = """
name: separable-micro
width_scale: 0.1
input_size: 32
classes: 10
conv: depthwise
fusion: pointwise
stages {
  repeats: [1, 1]
  channels: [16, 32]
}
pool_width: 64
"""


def rel_err(a, b, floor=1e-7):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
