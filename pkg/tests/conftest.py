from pathlib import Path

import numpy as np
import pytest

from hypermeta import autodiff as ad
from hypermeta.config import load_config
from hypermeta.data import normalize, synth_generate

ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = ROOT / "configs"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def deterministic():
    prev = ad.is_deterministic()
    ad.set_deterministic(True)
    yield
    ad.set_deterministic(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tuned_run():
    return load_config(CONFIG_DIR / "synthetic_loso.conf")


@pytest.fixture(scope="session")
def tiny_run():
    return load_config(CONFIG_DIR / "tiny.conf")


@pytest.fixture(scope="session")
def tiny_cohort(tiny_run):
    return [normalize(r) for r in synth_generate(tiny_run.synth, 0)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
