import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fmou import _kernels  # noqa: E402

BACKENDS = list(_kernels.KERNELS)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthonormal(rng, k, d):
    Q, _ = np.linalg.qr(rng.standard_normal((k, d)))
    return Q
