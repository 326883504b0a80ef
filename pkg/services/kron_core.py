"""Kronecker machinery: factorization of N, left-Kronecker composition and the
exact decomposition of steering vectors into uni-modulus factors.

The composition convention is the *left* Kronecker product: the first factor
varies fastest, so [1, e^{jT}] composed with [1, e^{j2T}] gives
[1, e^{jT}, e^{j2T}, e^{j3T}].
"""
import logging
import math
from functools import reduce
from typing import Sequence, Union

import numpy as np
from scipy.linalg import hadamard as sylvester_hadamard

from models.beamformer import FactorShape, KronFactors, strides
from models.errors import ConfigurationError, DimensionMismatch, UnsupportedPilotLength

logger = logging.getLogger(__name__)

ShapeLike = Union[FactorShape, Sequence[int]]


def _lengths(shape: ShapeLike) -> tuple:
    return shape.lengths if isinstance(shape, FactorShape) else tuple(int(n) for n in shape)


def prime_factorization(n: int) -> FactorShape:
    if n < 2:
        raise ConfigurationError(f"cannot factor N={n}; N must be >= 2")
    primes, rest, p = [], int(n), 2
    while p * p <= rest:
        while rest % p == 0:
            primes.append(p)
            rest //= p
        p += 1 if p == 2 else 2
    if rest > 1:
        primes.append(rest)
    return FactorShape(tuple(primes))


def is_prime(n: int) -> bool:
    return n >= 2 and prime_factorization(n).d == 1


def left_kron(a, b) -> np.ndarray:
    """result[q * len(a) + p] = a[p] * b[q]"""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    return np.outer(b, a).ravel()


def kron_compose(factors) -> np.ndarray:
    factors = list(factors)
    if not factors:
        raise ConfigurationError("cannot compose an empty factor list")
    return reduce(left_kron, factors)


def steering_factors(phi: float, shape: ShapeLike) -> KronFactors:
    """Factor m is [1, e^{j S_m phi}, ..., e^{j (n_m - 1) S_m phi}]"""
    lengths = _lengths(shape)
    return KronFactors(tuple(
        np.exp(1j * stride * float(phi) * np.arange(n))
        for n, stride in zip(lengths, strides(lengths))
    ))


def mixed_product_inner(f: KronFactors, v: KronFactors) -> complex:
    """prod_m (f^(m))^H v^(m), equal to compose(f)^H compose(v)"""
    if f.lengths != v.lengths:
        raise DimensionMismatch(f"factor shapes differ: {f.lengths} vs {v.lengths}")
    return complex(np.prod([np.vdot(fm, vm) for fm, vm in zip(f, v)]))


def _prime_power(q: int):
    """(p, k) with q = p^k for k <= 2, else None"""
    if q < 2:
        return None
    primes = prime_factorization(q).lengths
    if len(set(primes)) != 1 or len(primes) > 2:
        return None
    return primes[0], len(primes)


def _non_residue(p: int) -> int:
    return next(x for x in range(2, p) if pow(x, (p - 1) // 2, p) == p - 1)


def _paley_core(q: int) -> np.ndarray:
    """Jacobsthal matrix Q[i, j] = chi(j - i) over GF(q), q = p or p^2

    Element i of GF(p^2) is a + b*alpha with a = i % p, b = i // p and
    alpha^2 a quadratic non-residue mod p.
    """
    p, k = _prime_power(q)
    idx = np.arange(q)
    a, b = idx % p, idx // p
    r = _non_residue(p) if k == 2 else 0
    squares = (a * a + r * b * b) % p + p * ((2 * a * b) % p)
    chi = -np.ones(q, dtype=int)
    chi[squares[1:]] = 1
    chi[0] = 0
    diff = (a[None, :] - a[:, None]) % p + p * ((b[None, :] - b[:, None]) % p)
    return chi[diff]


def _paley_one(q: int) -> np.ndarray:
    """Order q + 1 for prime q = 3 (mod 4)"""
    jacobsthal = _paley_core(q)
    order = q + 1
    s = np.zeros((order, order), dtype=int)
    s[0, 1:] = 1
    s[1:, 0] = -1
    s[1:, 1:] = jacobsthal
    h = np.eye(order, dtype=int) + s
    # normalize the first column to +1
    return h * h[:, :1]


def _paley_two(q: int) -> np.ndarray:
    """Order 2 (q + 1) for q = p or p^2 with q = 1 (mod 4)"""
    jacobsthal = _paley_core(q)
    order = q + 1
    c = np.zeros((order, order), dtype=int)
    c[0, 1:] = 1
    c[1:, 0] = 1
    c[1:, 1:] = jacobsthal
    # zeros of the conference matrix sit on its diagonal only
    diagonal = np.array([[1, -1], [-1, -1]])
    off_diagonal = np.array([[1, 1], [1, -1]])
    h = np.zeros((2 * order, 2 * order), dtype=int)
    for i in range(order):
        for j in range(order):
            block = diagonal if c[i, j] == 0 else c[i, j] * off_diagonal
            h[2 * i:2 * i + 2, 2 * j:2 * j + 2] = block
    return h


def hadamard_matrix(order: int) -> np.ndarray:
    """+-1 matrix with mutually orthogonal rows

    Orders 1, 2, Sylvester doublings, Paley I (q prime, q = 3 mod 4) and
    Paley II (q a prime or prime square, q = 1 mod 4) are supported, which
    covers every multiple of 4 up to 64.
    """
    if order < 1:
        raise UnsupportedPilotLength(f"Hadamard order must be >= 1, got {order}")
    if order & (order - 1) == 0:
        return sylvester_hadamard(order).astype(int)
    if order % 4 == 0:
        q = order - 1
        if is_prime(q) and q % 4 == 3:
            return _paley_one(q)
        q = order // 2 - 1
        if q % 4 == 1 and _prime_power(q) is not None:
            return _paley_two(q)
        try:
            half = hadamard_matrix(order // 2)
        except UnsupportedPilotLength:
            pass
        else:
            return np.block([[half, half], [half, -half]])
    raise UnsupportedPilotLength(
        f"no Hadamard construction available for order {order}; use 1, 2 or a supported "
        f"multiple of 4")


def fourier_row(n: int, row_index: int) -> np.ndarray:
    """Row `row_index` (1-based) of the n x n DFT matrix"""
    return np.exp(-2j * math.pi * (row_index - 1) * np.arange(n) / n)
