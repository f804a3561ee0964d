import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lrvq.synthetic import EVAL_SEED_BASE, synth_corpus  # noqa: E402
from lrvq.training import train_from_corpus  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def train_corpus():
    return synth_corpus(32)


@pytest.fixture(scope="session")
def eval_corpus():
    return synth_corpus(4, EVAL_SEED_BASE)


@pytest.fixture(scope="session")
def desk_codebook(train_corpus):
    """K=256 codebook for P=8, R=2, I=2 trained on the 32-image corpus."""
    return train_from_corpus(train_corpus, 8, 2, 2, 256, seed=0)


def pytest_terminal_summary(terminalreporter):
    from report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
