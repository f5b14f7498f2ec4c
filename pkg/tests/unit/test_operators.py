import numpy as np
import pytest

from saiplab.constants.metadata import MaskModes
from saiplab.exceptions import ContractViolation, ResourceLimit
from saiplab.numerics import Rng, Signal
from saiplab.operators import (
    IdentityOperator,
    MaskOperator,
    MaskSpec,
    MatrixOperator,
    MeasurementModel,
    UniformBlurOperator,
    adjoint,
    apply,
    centered_box,
    dense_materialize,
    make_mask,
    measure,
    solve_gram,
)

SHAPE = (12, 12)
N_PIXELS = SHAPE[0] * SHAPE[1]


def _operators():
    return [
        IdentityOperator(in_dim=N_PIXELS, out_dim=N_PIXELS, image_shape=SHAPE),
        make_mask(MaskSpec(MaskModes.RANDOM, missing_fraction=0.9), SHAPE, Rng(1)),
        make_mask(MaskSpec(MaskModes.BOX, box=(3, 4, 5, 6)), SHAPE),
        UniformBlurOperator(in_dim=N_PIXELS, out_dim=N_PIXELS, image_shape=SHAPE, kernel_size=9),
        MatrixOperator.from_matrix(Rng(2).standard_normal((7, N_PIXELS))),
    ]


@pytest.fixture
def three_pixel_mask():
    return MaskOperator(in_dim=3, out_dim=2, kept=[0, 2])


def test_identity_apply():
    op = IdentityOperator(in_dim=3, out_dim=3)
    x = Signal.vector([1.0, -2.0, 3.5])
    assert np.array_equal(apply(op, x).data, x.data)
    assert np.array_equal(adjoint(op, x).data, x.data)


def test_mask_apply_and_adjoint(three_pixel_mask):
    assert np.array_equal(apply(three_pixel_mask, Signal.vector([5, 6, 7])).data, [5, 7])
    assert np.array_equal(adjoint(three_pixel_mask, Signal.vector([5, 7])).data, [5, 0, 7])


def test_blur_preserves_constant_image():
    op = UniformBlurOperator(in_dim=N_PIXELS, out_dim=N_PIXELS, image_shape=SHAPE, kernel_size=9)
    constant = Signal.from_image(np.full(SHAPE, 0.7))
    blurred = apply(op, constant)
    assert blurred.shape == SHAPE
    assert np.allclose(blurred.data, 0.7, atol=1e-12)


def test_blur_matches_direct_convolution():
    shape = (5, 6)
    op = UniformBlurOperator(in_dim=30, out_dim=30, image_shape=shape, kernel_size=3)
    image = Rng(4).standard_normal(shape)
    expected = np.zeros(shape)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            expected += np.roll(image, (di, dj), axis=(0, 1)) / 9.0
    assert np.allclose(apply(op, Signal.from_image(image)).as_image(), expected)


@pytest.mark.parametrize("kernel_size", [4, 0, 15])
def test_blur_kernel_contract(kernel_size):
    with pytest.raises(ContractViolation):
        UniformBlurOperator(
            in_dim=N_PIXELS, out_dim=N_PIXELS, image_shape=SHAPE, kernel_size=kernel_size
        )


@pytest.mark.parametrize("op", _operators(), ids=lambda op: op.kind)
def test_adjoint_identity(op):
    rng = Rng(3)
    for _ in range(100):
        x = rng.standard_normal(op.in_dim)
        u = rng.standard_normal(op.out_dim)
        forward = apply(op, x).data
        lhs = np.dot(forward, u)
        rhs = np.dot(x, adjoint(op, u).data)
        assert abs(lhs - rhs) <= 1e-10 * max(np.linalg.norm(forward) * np.linalg.norm(u), 1.0)


@pytest.mark.parametrize("op", _operators(), ids=lambda op: op.kind)
def test_dense_materialize_agrees_with_apply(op):
    matrix = dense_materialize(op).data
    rng = Rng(7)
    for _ in range(20):
        x = rng.standard_normal(op.in_dim)
        assert np.allclose(matrix @ x, apply(op, x).data, rtol=0, atol=1e-12)


@pytest.mark.parametrize("kernel_size", [1, 3, 9])
def test_blur_is_doubly_stochastic(kernel_size):
    op = UniformBlurOperator(
        in_dim=N_PIXELS, out_dim=N_PIXELS, image_shape=SHAPE, kernel_size=kernel_size
    )
    matrix = dense_materialize(op).data
    assert np.allclose(matrix.sum(axis=0), 1.0, rtol=0, atol=1e-12)
    assert np.allclose(matrix.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("op", _operators(), ids=lambda op: op.kind)
def test_forward_is_linear(op):
    rng = Rng(5)
    x, z = rng.standard_normal(op.in_dim), rng.standard_normal(op.in_dim)
    combined = apply(op, 2.0 * x - 3.0 * z).data
    assert np.allclose(combined, 2.0 * apply(op, x).data - 3.0 * apply(op, z).data)


@pytest.mark.parametrize("op", _operators(), ids=lambda op: op.kind)
def test_solve_gram_against_dense(op):
    rng = Rng(6)
    u = rng.standard_normal(op.out_dim)
    a = dense_materialize(op).data
    gram = 0.3 * a @ a.T + 0.05 * np.eye(op.out_dim)
    v = solve_gram(op, u, 0.3, 0.05).data
    assert np.allclose(gram @ v, u, atol=1e-9)


def test_operators_accept_chain_blocks():
    op = _operators()[3]
    block = Rng(8).standard_normal((4, N_PIXELS))
    stacked = op.forward(block)
    for row, result in zip(block, stacked):
        assert np.allclose(apply(op, row).data, result)


def test_apply_dimension_mismatch(three_pixel_mask):
    with pytest.raises(ContractViolation):
        apply(three_pixel_mask, Signal.vector([1.0, 2.0]))
    with pytest.raises(ContractViolation):
        adjoint(three_pixel_mask, Signal.vector([1.0, 2.0, 3.0]))


def test_measure_without_noise_is_exact():
    op = MatrixOperator.from_matrix([[1.0, 2.0], [0.0, -1.0]])
    x = Signal.vector([0.5, 1.5])
    y = measure(MeasurementModel(op, 0.0), x, Rng(0))
    assert np.array_equal(y.data, [3.5, -1.5])


def test_measure_denoising_noise():
    op = IdentityOperator(in_dim=4, out_dim=4)
    x = Signal.vector([1.0, 2.0, 3.0, 4.0])
    y = measure(MeasurementModel(op, 0.5), x, Rng(21))
    expected = x.data + 0.5 * Rng(21).standard_normal(4)
    assert np.allclose(y.data, expected)


def test_measure_noise_level():
    n = 100_000
    op = IdentityOperator(in_dim=n, out_dim=n)
    x = Signal(np.zeros(n))
    y = measure(MeasurementModel(op, 0.05), x, Rng(22))
    assert np.std(y.data) == pytest.approx(0.05, abs=0.002)


def test_negative_noise_std():
    with pytest.raises(ContractViolation):
        MeasurementModel(IdentityOperator(in_dim=2, out_dim=2), -0.1)


def test_dense_materialize():
    assert np.array_equal(dense_materialize(IdentityOperator(in_dim=3, out_dim=3)).data, np.eye(3))
    mask = MaskOperator(in_dim=3, out_dim=2, kept=[0, 2])
    assert np.array_equal(dense_materialize(mask).data, [[1, 0, 0], [0, 0, 1]])


def test_dense_materialize_limit():
    with pytest.raises(ResourceLimit):
        dense_materialize(IdentityOperator(in_dim=100, out_dim=100), limit=9_999)


def test_random_mask_fraction_and_determinism():
    spec = MaskSpec(MaskModes.RANDOM, missing_fraction=0.9)
    mask = make_mask(spec, SHAPE, Rng(13))
    assert mask.out_dim == N_PIXELS - int(round(0.9 * N_PIXELS))
    assert np.array_equal(mask.kept, make_mask(spec, SHAPE, Rng(13)).kept)
    assert np.all(np.diff(mask.kept) > 0)


def test_random_mask_requires_rng():
    with pytest.raises(ContractViolation):
        make_mask(MaskSpec(MaskModes.RANDOM, missing_fraction=0.5), SHAPE)


def test_box_mask_and_visualize():
    mask = make_mask(MaskSpec(MaskModes.BOX, box=centered_box(SHAPE, 0.5)), SHAPE)
    image = mask.as_image()
    assert image[6, 6] == 0.0
    assert image[0, 0] == 1.0
    assert image.sum() == N_PIXELS - 36
    y = apply(mask, Signal(np.ones(N_PIXELS), shape=SHAPE))
    assert np.array_equal(mask.visualize(y).as_image(), image)


@pytest.mark.parametrize(
    "spec",
    [
        MaskSpec(MaskModes.RANDOM, missing_fraction=1.5),
        MaskSpec(MaskModes.BOX, box=(10, 10, 5, 5)),
        MaskSpec(MaskModes.BOX),
        MaskSpec("checkerboard"),
    ],
)
def test_invalid_mask_specs(spec):
    with pytest.raises(ContractViolation):
        make_mask(spec, SHAPE, Rng(0))


def test_mask_indices_out_of_range():
    with pytest.raises(ContractViolation):
        MaskOperator(in_dim=3, out_dim=2, kept=[0, 3])
