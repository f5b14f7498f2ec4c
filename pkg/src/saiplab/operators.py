"""
====================
   Forward Operators
====================

The measurement model ``y = A x + n`` with ``n ~ N(0, sigma^2 I)`` and the three
matrix-free operators used by the restoration tasks: identity (denoising),
pixel mask (random and box inpainting) and circular uniform blur (deblurring).

Operators act on arrays whose last axis is the signal, so a whole block of
sampling chains can be pushed through in one call. The public functions take
and return :class:`~saiplab.numerics.Signal`.
"""

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.fft
import scipy.linalg

from saiplab.constants.data_values import DEFAULT_DENSE_LIMIT
from saiplab.constants.metadata import MaskModes, OperatorKinds
from saiplab.exceptions import ContractViolation, Degenerate, ResourceLimit
from saiplab.numerics import DenseMatrix, Rng, Signal, as_array


@dataclass(frozen=True, eq=False)
class LinearOperator(ABC):
    """
    Abstract ``A`` in R^{M x N}. Subclasses implement the forward map and its
    transpose on arrays of shape ``(..., N)`` and ``(..., M)``.
    """

    in_dim: int
    out_dim: int
    image_shape: Optional[Tuple[int, int]] = None
    _gram_factors: Dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    @abstractmethod
    def kind(self) -> str:
        pass

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def transpose(self, u: np.ndarray) -> np.ndarray:
        pass

    def solve_gram(self, u: np.ndarray, r2: float, noise_var: float) -> np.ndarray:
        """Solves ``(r2 A A^T + noise_var I) v = u`` through a cached Cholesky factor."""
        key = (float(r2), float(noise_var))
        with self._lock:
            factor = self._gram_factors.get(key)
        if factor is None:
            a = dense_materialize(self).data
            gram = r2 * (a @ a.T) + noise_var * np.eye(self.out_dim)
            try:
                factor = scipy.linalg.cho_factor(gram, lower=True)
            except np.linalg.LinAlgError:
                raise Degenerate(
                    f"(r^2 A A^T + sigma^2 I) is singular for r^2={r2}, sigma^2={noise_var}."
                ) from None
            with self._lock:
                self._gram_factors[key] = factor
        u = np.asarray(u, dtype=np.float64)
        return scipy.linalg.cho_solve(factor, u.reshape(-1, self.out_dim).T).T.reshape(u.shape)

    def visualize(self, y: Signal) -> Signal:
        """Image-shaped view of a measurement, for writing it out."""
        if self.image_shape is not None and len(y) == self.image_shape[0] * self.image_shape[1]:
            return Signal(y.data, shape=self.image_shape)
        return y


def _diagonal_gram_solve(u: np.ndarray, r2: float, noise_var: float) -> np.ndarray:
    denominator = r2 + noise_var
    if denominator <= 0:
        raise Degenerate(
            f"(r^2 A A^T + sigma^2 I) is singular for r^2={r2}, sigma^2={noise_var}."
        )
    return np.asarray(u, dtype=np.float64) / denominator


@dataclass(frozen=True, eq=False)
class IdentityOperator(LinearOperator):
    @property
    def kind(self) -> str:
        return OperatorKinds.IDENTITY

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=np.float64)

    def transpose(self, u: np.ndarray) -> np.ndarray:
        return np.array(u, dtype=np.float64)

    def solve_gram(self, u: np.ndarray, r2: float, noise_var: float) -> np.ndarray:
        return _diagonal_gram_solve(u, r2, noise_var)


@dataclass(frozen=True, eq=False)
class MaskOperator(LinearOperator):
    """Keeps the coordinates listed in ``kept`` (sorted) and drops the rest."""

    kept: np.ndarray = None

    def __post_init__(self):
        kept = np.unique(np.asarray(self.kept, dtype=np.int64))
        if kept.size != self.out_dim:
            raise ContractViolation(
                f"Mask keeps {kept.size} coordinates but out_dim is {self.out_dim}."
            )
        if kept.size and (kept[0] < 0 or kept[-1] >= self.in_dim):
            raise ContractViolation(f"Mask indices must lie in [0, {self.in_dim}).")
        kept.setflags(write=False)
        object.__setattr__(self, "kept", kept)

    @property
    def kind(self) -> str:
        return OperatorKinds.MASK

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)[..., self.kept]

    def transpose(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        result = np.zeros(u.shape[:-1] + (self.in_dim,))
        result[..., self.kept] = u
        return result

    def solve_gram(self, u: np.ndarray, r2: float, noise_var: float) -> np.ndarray:
        # A A^T is the identity on the kept coordinates
        return _diagonal_gram_solve(u, r2, noise_var)

    def as_image(self) -> np.ndarray:
        """1 where a pixel is observed, 0 where it is missing."""
        mask = np.zeros(self.in_dim)
        mask[self.kept] = 1.0
        return mask.reshape(self.image_shape) if self.image_shape else mask

    def visualize(self, y: Signal) -> Signal:
        scattered = self.transpose(y.data)
        if self.image_shape is not None:
            return Signal(scattered, shape=self.image_shape)
        return Signal(scattered)


@dataclass(frozen=True, eq=False)
class UniformBlurOperator(LinearOperator):
    """
    Circular convolution with a ``k x k`` box kernel. With periodic boundaries the
    operator is symmetric, doubly stochastic and preserves constant images.
    """

    kernel_size: int = 9
    transfer: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.image_shape is None:
            raise ContractViolation("Blur requires an image shape.")
        height, width = self.image_shape
        k = int(self.kernel_size)
        if k < 1 or k % 2 == 0:
            raise ContractViolation(f"Blur kernel size must be a positive odd integer. Provided {k}.")
        if k > min(height, width):
            raise ContractViolation(
                f"Blur kernel size {k} exceeds the image shape {self.image_shape}."
            )
        kernel = np.zeros((height, width))
        offsets = np.arange(-(k // 2), k // 2 + 1)
        rows = np.mod(offsets, height)
        cols = np.mod(offsets, width)
        kernel[np.ix_(rows, cols)] = 1.0 / (k * k)
        # Symmetric kernel, so the transfer function is real up to rounding
        transfer = scipy.fft.rfft2(kernel).real
        transfer.setflags(write=False)
        object.__setattr__(self, "transfer", transfer)

    @property
    def kind(self) -> str:
        return OperatorKinds.UNIFORM_BLUR

    def _convolve(self, x: np.ndarray, transfer: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        images = x.reshape(x.shape[:-1] + tuple(self.image_shape))
        spectrum = scipy.fft.rfft2(images, axes=(-2, -1)) * transfer
        result = scipy.fft.irfft2(spectrum, s=self.image_shape, axes=(-2, -1))
        return result.reshape(x.shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._convolve(x, self.transfer)

    def transpose(self, u: np.ndarray) -> np.ndarray:
        return self._convolve(u, self.transfer)

    def solve_gram(self, u: np.ndarray, r2: float, noise_var: float) -> np.ndarray:
        denominator = r2 * self.transfer**2 + noise_var
        if np.any(denominator <= 0):
            raise Degenerate(
                f"(r^2 A A^T + sigma^2 I) is singular for r^2={r2}, sigma^2={noise_var}."
            )
        return self._convolve(u, 1.0 / denominator)


@dataclass(frozen=True)
class MaskSpec:
    mode: str
    missing_fraction: float = 0.0
    box: Optional[Tuple[int, int, int, int]] = None  # top, left, height, width

    def validate(self, image_shape: Tuple[int, int]) -> None:
        if self.mode == MaskModes.RANDOM:
            if not 0 <= self.missing_fraction <= 1:
                raise ContractViolation(
                    f"missing_fraction must be between 0 and 1. Provided {self.missing_fraction}."
                )
        elif self.mode == MaskModes.BOX:
            if self.box is None:
                raise ContractViolation("Box masks require a (top, left, height, width) box.")
            top, left, height, width = self.box
            if (
                top < 0
                or left < 0
                or height < 0
                or width < 0
                or top + height > image_shape[0]
                or left + width > image_shape[1]
            ):
                raise ContractViolation(
                    f"Box {self.box} does not lie inside the image of shape {image_shape}."
                )
        else:
            raise ContractViolation(f"Unknown mask mode '{self.mode}'.")


def centered_box(image_shape: Tuple[int, int], fraction: float) -> Tuple[int, int, int, int]:
    side = int(round(min(image_shape) * fraction))
    top = (image_shape[0] - side) // 2
    left = (image_shape[1] - side) // 2
    return top, left, side, side


def make_mask(spec: MaskSpec, image_shape: Tuple[int, int], rng: Optional[Rng] = None) -> MaskOperator:
    """
    Builds the inpainting operator. Random masks are drawn once from ``rng`` and
    then fixed for the task instance.
    """
    spec.validate(image_shape)
    n = image_shape[0] * image_shape[1]
    if spec.mode == MaskModes.RANDOM:
        if rng is None:
            raise ContractViolation("Random masks require an Rng.")
        n_missing = int(round(spec.missing_fraction * n))
        missing = rng.generator.permutation(n)[:n_missing]
        kept = np.setdiff1d(np.arange(n), missing)
    else:
        top, left, height, width = spec.box
        observed = np.ones(image_shape, dtype=bool)
        observed[top : top + height, left : left + width] = False
        kept = np.flatnonzero(observed)
    return MaskOperator(in_dim=n, out_dim=kept.size, image_shape=image_shape, kept=kept)


@dataclass(frozen=True)
class MeasurementModel:
    operator: LinearOperator
    noise_std: float

    def __post_init__(self):
        if self.noise_std < 0:
            raise ContractViolation(f"noise_std must be nonnegative. Provided {self.noise_std}.")

    @property
    def noise_var(self) -> float:
        return self.noise_std**2


def _check_input(op: LinearOperator, x: np.ndarray, dim: int, name: str) -> None:
    if x.shape[-1] != dim:
        raise ContractViolation(
            f"{name} of the {op.kind} operator expects length {dim}. Provided {x.shape[-1]}."
        )


def apply(op: LinearOperator, x: Union[Signal, np.ndarray]) -> Signal:
    """Returns ``A x``."""
    x = as_array(x)
    _check_input(op, x, op.in_dim, "apply")
    result = op.forward(x)
    if op.out_dim == op.in_dim and op.image_shape is not None:
        return Signal(result, shape=op.image_shape)
    return Signal(result)


def adjoint(op: LinearOperator, u: Union[Signal, np.ndarray]) -> Signal:
    """Returns ``A^T u``."""
    u = as_array(u)
    _check_input(op, u, op.out_dim, "adjoint")
    result = op.transpose(u)
    if op.image_shape is not None:
        return Signal(result, shape=op.image_shape)
    return Signal(result)


def measure(model: MeasurementModel, x: Union[Signal, np.ndarray], rng: Rng) -> Signal:
    """Returns ``y = A x + sigma * eps`` with standard normal ``eps``."""
    clean = apply(model.operator, x)
    if model.noise_std == 0:
        return clean
    noise = model.noise_std * rng.standard_normal(len(clean))
    return Signal(clean.data + noise, shape=clean.shape)


def solve_gram(
    op: LinearOperator, u: Union[Signal, np.ndarray], r2: float, noise_var: float
) -> Signal:
    """Solves ``(r2 A A^T + noise_var I) v = u``."""
    u = as_array(u)
    _check_input(op, u, op.out_dim, "solve_gram")
    return Signal(op.solve_gram(u, r2, noise_var))


def dense_materialize(op: LinearOperator, limit: int = DEFAULT_DENSE_LIMIT) -> DenseMatrix:
    """
    Explicit ``M x N`` matrix of the operator.

    :raises ResourceLimit: when ``in_dim * out_dim`` exceeds ``limit`` entries.
    """
    if op.in_dim * op.out_dim > limit:
        raise ResourceLimit(
            f"Materializing a {op.out_dim}x{op.in_dim} {op.kind} operator exceeds the "
            f"limit of {limit} entries."
        )
    columns = op.forward(np.eye(op.in_dim))
    return DenseMatrix(columns.T)


@dataclass(frozen=True, eq=False)
class MatrixOperator(LinearOperator):
    """A small explicit operator, e.g. ``A = [1 0]`` of the 2D toy problem."""

    matrix: np.ndarray = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.shape != (self.out_dim, self.in_dim):
            raise ContractViolation(
                f"Matrix shape {matrix.shape} does not match ({self.out_dim}, {self.in_dim})."
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, matrix) -> "MatrixOperator":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        return cls(in_dim=matrix.shape[1], out_dim=matrix.shape[0], matrix=matrix)

    @property
    def kind(self) -> str:
        return "matrix"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("ij,...j->...i", self.matrix, np.asarray(x, dtype=np.float64))

    def transpose(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("ij,...i->...j", self.matrix, np.asarray(u, dtype=np.float64))
