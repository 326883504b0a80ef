import logging
import math

import numpy as np
import pytest

from models.beamformer import FactorShape, KronFactors, strides
from models.errors import ConfigurationError, DimensionMismatch, UnsupportedPilotLength
from services.array_channel import steering_vector
from services.kron_core import (
    fourier_row,
    hadamard_matrix,
    kron_compose,
    left_kron,
    mixed_product_inner,
    prime_factorization,
    steering_factors,
)

logger = logging.getLogger(__name__)


@pytest.mark.parametrize("n, expected", [
    (128, (2,) * 7),
    (360, (2, 2, 2, 3, 3, 5)),
    (12, (2, 2, 3)),
    (97, (97,)),
    (2, (2,)),
])
def test_prime_factorization(n, expected):
    assert prime_factorization(n).lengths == expected


def test_prime_factorization_rejects_small_n():
    with pytest.raises(ConfigurationError):
        prime_factorization(1)


def test_factor_shape_sorts_and_groups():
    shape = FactorShape((5, 2, 3, 2))
    assert shape.lengths == (2, 2, 3, 5)
    assert shape.n == 60 and shape.d == 4
    assert shape.grouped(2) == (2, 2, 15)
    assert shape.grouped(4) == (2, 2, 3, 5, 1)
    assert strides((2, 3, 5)) == (1, 2, 6)
    with pytest.raises(ConfigurationError):
        FactorShape((1, 4))


def test_left_kron_first_factor_varies_fastest():
    """[1, e^{jT}] composed with [1, e^{j2T}] is the length-4 steering vector"""
    theta = 0.7
    out = left_kron([1, np.exp(1j * theta)], [1, np.exp(2j * theta)])
    np.testing.assert_allclose(out, steering_vector(theta, 4), atol=1e-15)
    np.testing.assert_allclose(left_kron([1, 2], [10, 20, 30]), [10, 20, 20, 40, 30, 60])


@pytest.mark.parametrize("n", [8, 12, 16, 128, 360])
def test_steering_vector_round_trip(n):
    """Composing the steering factors reproduces the steering vector"""
    rng = np.random.default_rng(n)
    shape = prime_factorization(n)
    for phi in rng.uniform(0, 2 * math.pi, 100):
        factors = steering_factors(phi, shape)
        assert factors.is_unimodular()
        np.testing.assert_allclose(kron_compose(factors), steering_vector(phi, n), atol=1e-11)


def test_steering_factors_on_grouped_shape():
    factors = steering_factors(0.4, (2, 2, 8))
    assert factors.lengths == (2, 2, 8)
    np.testing.assert_allclose(factors[2], np.exp(1j * 4 * 0.4 * np.arange(8)))
    np.testing.assert_allclose(kron_compose(factors), steering_vector(0.4, 32), atol=1e-13)


def test_mixed_product_inner_matches_composed_inner_product():
    rng = np.random.default_rng(2)
    lengths = (2, 3, 4)
    f = KronFactors(tuple(np.exp(1j * rng.uniform(0, 6.3, n)) for n in lengths))
    v = KronFactors(tuple(rng.normal(size=n) + 1j * rng.normal(size=n) for n in lengths))
    direct = np.vdot(kron_compose(f), kron_compose(v))
    assert mixed_product_inner(f, v) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(DimensionMismatch):
        mixed_product_inner(f, KronFactors((np.ones(4), np.ones(3), np.ones(2))))


def test_kron_compose_needs_factors():
    with pytest.raises(ConfigurationError):
        kron_compose([])


@pytest.mark.parametrize("order", [1, 2] + list(range(4, 65, 4)) + [100])
def test_hadamard_rows_are_orthogonal(order):
    h = hadamard_matrix(order)
    assert h.shape == (order, order)
    assert set(np.unique(h)) <= {-1, 1}
    np.testing.assert_array_equal(h @ h.T, order * np.eye(order, dtype=int))


@pytest.mark.parametrize("order", [0, 3, 6, 10])
def test_unsupported_hadamard_orders(order):
    with pytest.raises(UnsupportedPilotLength):
        hadamard_matrix(order)


def test_fourier_rows_sum_to_zero():
    for n in (2, 3, 5, 7):
        assert abs(fourier_row(n, 1).sum() - n) < 1e-12
        for r in range(2, n + 1):
            assert abs(fourier_row(n, r).sum()) < 1e-12


def test_order_52_uses_the_field_with_25_elements():
    h = hadamard_matrix(52)
    np.testing.assert_array_equal(h @ h.T, 52 * np.eye(52, dtype=int))
    np.testing.assert_array_equal(h.T @ h, 52 * np.eye(52, dtype=int))
