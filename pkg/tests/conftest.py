import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def write(tmp_path):
    """Write text to a fresh file under tmp_path and return its path."""
    counter = iter(range(10_000))

    def _write(text, name=None):
        path = tmp_path / (name or f"f{next(counter)}.txt")
        path.write_text(text)
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
