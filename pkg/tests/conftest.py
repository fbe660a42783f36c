from __future__ import annotations

import numpy as np
import pytest

from conceptforge import geometry as geo


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from a random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_transform(rng: np.random.Generator, scale: float = 1.0) -> geo.Transform:
    return geo.transform_from(random_rotation(rng), rng.uniform(-scale, scale, 3))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
