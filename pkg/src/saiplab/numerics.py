"""
================
   Core Numerics
================

Dense vector and matrix types shared by every other module, the seeded random
number generator, and a handful of numerical helpers.

All floating point is 64-bit. The adaptive scale divides by the squared norm of
the prior score, which becomes small near the end of sampling.

The random number generator is numpy's ``PCG64`` bit generator behind a
``numpy.random.Generator``; keyed sub-streams (one per sampling chain, one for
the inpainting mask, ...) derive their seed from ``(seed, key)`` through
:func:`saiplab.utilities.get_stream_seed`, so that identical seeds reproduce
identical sequences.
"""

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from saiplab.exceptions import ContractViolation, NotPositiveDefinite
from saiplab.utilities import get_stream_seed


@dataclass(frozen=True)
class Signal:
    """
    A flat real vector holding x, x_t, an estimate of x_0, a measurement or an
    image in row-major layout. Pure vectors have ``shape == (n, 1)``.
    """

    data: np.ndarray
    shape: Tuple[int, int] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64).reshape(-1)
        shape = (data.size, 1) if self.shape is None else tuple(int(s) for s in self.shape)
        if len(shape) != 2 or shape[0] * shape[1] != data.size:
            raise ContractViolation(
                f"Signal of length {data.size} does not match shape {shape}."
            )
        if not np.all(np.isfinite(data)):
            raise ContractViolation("Signal entries must be finite (no NaN or Inf).")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def vector(cls, values) -> "Signal":
        return cls(np.asarray(values, dtype=np.float64).reshape(-1))

    @classmethod
    def from_image(cls, image) -> "Signal":
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise ContractViolation(f"Images must be 2D. Provided {image.ndim} dimensions.")
        return cls(image.reshape(-1), shape=image.shape)

    def as_image(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @property
    def is_image(self) -> bool:
        return self.shape[1] > 1

    def __len__(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class DenseMatrix:
    data: np.ndarray
    spd: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ContractViolation(f"DenseMatrix must be 2D. Provided {data.ndim} dimensions.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.spd:
            # The flag is only ever trusted once a factorization succeeds
            cholesky(DenseMatrix(data))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @classmethod
    def identity(cls, n: int) -> "DenseMatrix":
        return cls(np.eye(n), spd=True)

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        return self.rows == self.cols and np.allclose(self.data, self.data.T, rtol=0, atol=atol)

    def matvec(self, x: Union[Signal, np.ndarray]) -> np.ndarray:
        x = as_array(x)
        if x.shape[-1] != self.cols:
            raise ContractViolation(
                f"Matrix with {self.cols} columns cannot multiply a vector of length {x.shape[-1]}."
            )
        return x @ self.data.T


@dataclass
class Rng:
    """
    Seeded random stream. Instances are owned by a single sampling chain and
    are never shared between threads.
    """

    seed: int
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, key: str) -> "Rng":
        """Returns an independent stream keyed by ``key``."""
        return Rng(get_stream_seed(self.seed, key))

    def reseed(self) -> None:
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)


def as_array(x: Union[Signal, np.ndarray]) -> np.ndarray:
    if isinstance(x, Signal):
        return x.data
    return np.asarray(x, dtype=np.float64)


def check_same_length(a: np.ndarray, b: np.ndarray, context: str) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ContractViolation(
            f"Dimension mismatch in {context}: {a.shape[-1]} != {b.shape[-1]}."
        )


def dot(a: Union[Signal, np.ndarray], b: Union[Signal, np.ndarray]) -> float:
    """Standard inner product of two equal-length vectors."""
    a, b = as_array(a), as_array(b)
    check_same_length(a, b, "dot")
    return float(np.dot(a, b))


def norm_sq(a: Union[Signal, np.ndarray]) -> float:
    a = as_array(a)
    return float(np.dot(a, a))


def row_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inner products along the last axis, one per row of a batch."""
    check_same_length(a, b, "row_dot")
    return np.einsum("...i,...i->...", a, b)


def gaussian_sample(rng: Rng, n: int, mean: float = 0.0, std: float = 1.0) -> Signal:
    """
    Draws ``n`` i.i.d. normal values. A zero ``std`` returns the constant
    ``mean`` vector (no draws are consumed).
    """
    if std < 0:
        raise ContractViolation(f"Standard deviation must be nonnegative. Provided {std}.")
    if std == 0:
        return Signal(np.full(n, float(mean)))
    return Signal(mean + std * rng.standard_normal(n))


def cholesky(m: DenseMatrix) -> DenseMatrix:
    """
    Lower-triangular factor ``L`` with ``L @ L.T == m``.

    :raises NotPositiveDefinite: when ``m`` is not symmetric positive definite.
    """
    scale = max(1.0, float(np.max(np.abs(m.data)))) if m.data.size else 1.0
    if not m.is_symmetric(atol=1e-10 * scale):
        raise ContractViolation("Cholesky factorization requires a symmetric matrix.")
    try:
        lower = scipy.linalg.cholesky(m.data, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            f"Matrix of shape {m.data.shape} is not positive definite."
        ) from None
    return DenseMatrix(lower)
