import sys

import numpy as np
import pytest

from vtpmd import kernels
from vtpmd.vit import TransformerConfig, init_model


@pytest.fixture(params=kernels.available())
def backend(request):
    with kernels.use(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    return TransformerConfig(image_size=32, patch_size=8, layers=2, heads=2, embed_dim=16,
                             mlp_ratio=2.0, classes=10)


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config, np.random.default_rng(7))


def rel(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb > 0 else 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
