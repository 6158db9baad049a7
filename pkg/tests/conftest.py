import random
from pathlib import Path

import pytest

from causalchain.synth import random_document

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def env_dir() -> Path:
    return FIXTURES / "envs"


@pytest.fixture
def sample_doc():
    return random_document(random.Random(42), serial=1)


def make_doc(seed: int = 0, **kwargs):
    return random_document(random.Random(seed), serial=seed, **kwargs)
