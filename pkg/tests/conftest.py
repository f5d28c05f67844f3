import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from sammese.config import toy_config  # noqa: E402


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(max(torch.get_num_threads(), 1))


@pytest.fixture
def cfg():
    return toy_config()


@pytest.fixture
def tiny_cfg():
    return toy_config(epochs=1, batch_size=2)
