import numpy as np
import pytest
from hypothesis import settings

from fouriergnn.model import FourierGNN, ModelConfig

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def randomize_biases(model, rng, scale=0.3):
    """Fresh models have zero biases; give them values so bias paths are exercised."""
    for name, value in model.params.items():
        if name.rsplit(".", 1)[-1] in ("bias", "b1", "b2", "b3"):
            noise = rng.normal(size=value.shape) * scale
            if np.iscomplexobj(value):
                noise = noise + 1j * rng.normal(size=value.shape) * scale
            model.params[name] = noise
    return model


@pytest.fixture
def small_model(rng):
    cfg = ModelConfig(n_vars=3, n_steps=4, horizon=2, embed_dim=3, n_layers=3, reduce_dim=2,
                      ffn_dim1=5, ffn_dim2=4)
    return randomize_biases(FourierGNN.init(cfg, 7), rng)
