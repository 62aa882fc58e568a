"""Shared fixtures: deterministic images and a perturbed invertible transform."""

import numpy as np
import pytest

from dct2net.transform import TransformBasis, dct_basis


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_image(rng):
    """24x24 float64 image on the 0-255 scale with some structure."""
    base = np.add.outer(np.arange(24) * 4.0, np.arange(24) * 3.0)
    return base + 20.0 * rng.standard_normal((24, 24))


def perturbed_basis(p: int, scale: float = 0.05, seed: int = 7) -> TransformBasis:
    """DCT basis plus a small random perturbation; invertible but not orthonormal."""
    gen = np.random.default_rng(seed)
    n = p * p
    return TransformBasis(dct_basis(p).mat + scale / n * gen.standard_normal((n, n)))
