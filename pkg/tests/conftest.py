import numpy as np
import pytest
from hypothesis import settings

from wfseedbank import ModelParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_params(rng: np.random.Generator, two_island: bool | None = None, mutation=True) -> ModelParams:
    """Random instance with a mix of zero and nonzero mutation rates."""
    while True:
        u = rng.uniform(0.0, 1.5, 4) * (rng.random(4) < 0.7)
        if not mutation or u.sum() > 0:
            break
    island = rng.random() < 0.5 if two_island is None else two_island
    return ModelParams(u1=u[0], u2=u[1], u1p=u[2], u2p=u[3], c=rng.uniform(0.2, 2.0),
                       cp=rng.uniform(0.2, 2.0), alpha=rng.uniform(0.5, 1.5),
                       alphap=rng.uniform(0.5, 1.5) if island else 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(__import__("sys").modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
