"""Shared fixtures: deterministic synthetic scenes and dictionaries.

The image-derived fixtures come from one procedurally rendered
photograph-like scene (gradient background, soft blobs, hard-edged
boxes, fine texture) and a second-modality counterpart with remapped
tone and extra detail, cropped at fixed offsets. Everything is seeded
so test runs are reproducible.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cssa import DictionarySet, init_dictionary

settings.register_profile(
    "ci", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def synth_photo(size=160, seed=2024):
    """One photograph-like grayscale scene in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)
    img = 0.3 + 0.4 * yy
    for _ in range(24):
        cy, cx = rng.uniform(0.05, 0.95, 2)
        s = rng.uniform(0.02, 0.1)
        img += rng.uniform(-0.3, 0.4) * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * s * s)
        )
    for _ in range(6):
        y0, x0 = rng.integers(0, size - 30, 2)
        hh, ww = rng.integers(8, 28, 2)
        img[y0:y0 + hh, x0:x0 + ww] = rng.uniform(0.1, 0.9)
    img += 0.03 * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0)


def synth_counterpart(base, seed=2025):
    """Second modality of the same scene: remapped tone, some detail
    visible only here."""
    rng = np.random.default_rng(seed)
    size = base.shape[0]
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)
    img = np.clip(base, 0.0, 1.0) ** 0.7
    for _ in range(8):
        cy, cx = rng.uniform(0.05, 0.95, 2)
        s = rng.uniform(0.015, 0.06)
        img += rng.uniform(-0.25, 0.35) * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * s * s)
        )
    img += 0.03 * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0)


def make_image_pairs(crop=64):
    """Five 64x64 pairs cropped from the two-modality scene."""
    a = synth_photo()
    b = synth_counterpart(a)
    offsets = [(0, 0), (0, 96), (96, 0), (96, 96), (48, 48)]
    return [
        (a[y:y + crop, x:x + crop].copy(), b[y:y + crop, x:x + crop].copy())
        for y, x in offsets
    ]


def make_random_pairs(count=20, size=64, seed=77):
    """Correlated random-field pairs with modality-specific parts."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        shared = rng.standard_normal((size, size))
        a = 0.2 * (shared + 0.4 * rng.standard_normal((size, size)))
        b = 0.2 * (0.8 * shared + 0.4 * rng.standard_normal((size, size)))
        pairs.append((a, b))
    return pairs


@pytest.fixture(scope="session")
def image_pairs():
    return make_image_pairs()


@pytest.fixture(scope="session")
def random_pairs():
    return make_random_pairs()


@pytest.fixture(scope="session")
def small_dict():
    return init_dictionary(4, 4, seed=5)


@pytest.fixture(scope="session")
def pair_dicts():
    return DictionarySet((init_dictionary(8, 8, seed=11),
                          init_dictionary(8, 8, seed=12)))
