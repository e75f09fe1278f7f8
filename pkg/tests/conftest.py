import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from steerbench.network import NetworkSpec, conv_layer, fc_layer, flatten_layer, xavier_init


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """Small conv net usable for gradient checks (< 500 parameters)."""
    return NetworkSpec(
        layers=(
            conv_layer(3, 3, 2, 3, stride=(2, 2)),
            flatten_layer(),
            fc_layer(3 * 2 * 3, 4),
            fc_layer(4, 1, activation="linear"),
        ),
        input_shape=(7, 6, 2),
    )


@pytest.fixture
def tiny_store(tiny_spec):
    return xavier_init(tiny_spec, seed=99)


@pytest.fixture
def linear_spec():
    """Flatten + single linear layer: loss is exactly quadratic in the weights."""
    return NetworkSpec(layers=(flatten_layer(), fc_layer(16, 1, activation="linear")),
                       input_shape=(4, 4, 1))


def random_conv_instance(rng, dtype=np.float32):
    kh = int(rng.integers(1, 4))
    kw = int(rng.integers(1, 4))
    sh = int(rng.integers(1, 4))
    sw = int(rng.integers(1, 4))
    in_ch = int(rng.integers(1, 5))
    out_ch = int(rng.integers(1, 6))
    in_h = kh + sh * int(rng.integers(0, 5))
    in_w = kw + sw * int(rng.integers(0, 5))
    inp = rng.standard_normal((in_h, in_w, in_ch)).astype(dtype)
    kernels = rng.standard_normal((kh, kw, in_ch, out_ch)).astype(dtype)
    bias = rng.standard_normal(out_ch).astype(dtype)
    return inp, kernels, bias, (sh, sw)


def random_fc_instance(rng, dtype=np.float32):
    in_dim = int(rng.integers(1, 33))
    out_dim = int(rng.integers(1, 17))
    weights = rng.standard_normal((out_dim, in_dim)).astype(dtype)
    x = rng.standard_normal(in_dim).astype(dtype)
    bias = rng.standard_normal(out_dim).astype(dtype)
    return weights, x, bias
