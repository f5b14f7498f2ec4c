import numpy as np
import pytest

from saiplab.constants.metadata import GuidanceNames, PigdmModes
from saiplab.diffusion import DiffusionState, forward_noise, make_scaled_linear_schedule
from saiplab.entity_types import GuidanceMethod
from saiplab.exceptions import ContractViolation, Degenerate
from saiplab.gmm import GmmPrior, exact_likelihood_score, posterior_mean
from saiplab.guidance import (
    approximation_error,
    approximation_error_block,
    estimate_block,
    estimate_likelihood_score,
    make_problem,
)
from saiplab.guidance_entities import GUIDANCE_TYPES
from saiplab.numerics import Rng, Signal
from saiplab.operators import IdentityOperator, MatrixOperator, MeasurementModel, apply
from saiplab.score_models import ExternalScoreModel, GmmScoreModel

SCHEDULE = make_scaled_linear_schedule(40)
ALL_KINDS = [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM, GuidanceNames.EXACT]


@pytest.fixture
def isotropic_gaussian() -> GmmPrior:
    return GmmPrior.isotropic([1.0], [[0.5, -1.0, 0.0, 2.0]], [0.7])


@pytest.fixture
def wide_model() -> MeasurementModel:
    return MeasurementModel(MatrixOperator.from_matrix(Rng(31).standard_normal((2, 4))), 0.2)


def test_guidance_types_registry():
    assert [guidance_type.name for guidance_type in GUIDANCE_TYPES] == ALL_KINDS
    assert GUIDANCE_TYPES.get(GuidanceNames.EXACT).needs_oracle


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "score_sde"},
        {"kind": GuidanceNames.DPS, "scale_param": 0.0},
        {"kind": GuidanceNames.DPS, "scale_param": float("nan")},
        {"kind": GuidanceNames.PIGDM, "pigdm_r2_mode": "learned"},
    ],
)
def test_invalid_guidance_method(kwargs):
    with pytest.raises(ContractViolation):
        GuidanceMethod(**kwargs)


@pytest.mark.parametrize("kind", [GuidanceNames.DPS, GuidanceNames.PIGDM])
def test_zero_residual_gives_zero_estimate(random_mixture, first_coordinate_model, kind):
    state = DiffusionState(Signal.vector([0.3, 0.9]), 20)
    x0_hat = posterior_mean(random_mixture, SCHEDULE, state.x_t, 20)
    y = apply(first_coordinate_model.operator, x0_hat)
    output = estimate_likelihood_score(
        GuidanceMethod(kind), random_mixture, SCHEDULE, first_coordinate_model, y, state
    )
    assert np.allclose(output.likelihood_score.data, 0.0, atol=1e-12)
    assert np.isfinite(output.effective_scale)


def test_dmps_zero_residual(random_mixture, first_coordinate_model):
    state = DiffusionState(Signal.vector([0.3, 0.9]), 20)
    y = apply(first_coordinate_model.operator, state.x_t.data / np.sqrt(SCHEDULE.alpha_bar_at(20)))
    output = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.DMPS),
        random_mixture,
        SCHEDULE,
        first_coordinate_model,
        y,
        state,
    )
    assert np.allclose(output.likelihood_score.data, 0.0, atol=1e-12)


@pytest.mark.parametrize("t", [2, 15, 39])
def test_pigdm_is_exact_for_isotropic_gaussian(isotropic_gaussian, wide_model, t):
    rng = Rng(t)
    state = DiffusionState(Signal(rng.standard_normal(4)), t)
    y = Signal(rng.standard_normal(2))
    method = GuidanceMethod(GuidanceNames.PIGDM, pigdm_r2_mode=PigdmModes.EXACT_GAUSSIAN)
    output = estimate_likelihood_score(method, isotropic_gaussian, SCHEDULE, wide_model, y, state)
    exact = exact_likelihood_score(isotropic_gaussian, SCHEDULE, wide_model, y, state.x_t, t)
    assert np.linalg.norm(output.likelihood_score.data - exact.data) <= 1e-8 * np.linalg.norm(
        exact.data
    )
    assert approximation_error(method, isotropic_gaussian, SCHEDULE, wide_model, y, state) < 1e-8


def test_exact_kind_matches_oracle(random_mixture, first_coordinate_model):
    state = DiffusionState(Signal.vector([-0.4, 1.2]), 10)
    y = Signal.vector([0.5])
    method = GuidanceMethod(GuidanceNames.EXACT, scale_param=2.0)
    output = estimate_likelihood_score(
        method, random_mixture, SCHEDULE, first_coordinate_model, y, state
    )
    expected = exact_likelihood_score(
        random_mixture, SCHEDULE, first_coordinate_model, y, state.x_t, 10
    )
    assert np.allclose(output.likelihood_score.data, expected.data)
    assert output.effective_scale == 2.0
    assert approximation_error(
        method, random_mixture, SCHEDULE, first_coordinate_model, y, state
    ) == pytest.approx(0.0, abs=1e-12)


def test_dps_scale_is_normalized_by_residual(random_mixture, first_coordinate_model):
    state = DiffusionState(Signal.vector([0.2, 0.2]), 10)
    y = Signal.vector([3.0])
    x0_hat = posterior_mean(random_mixture, SCHEDULE, state.x_t, 10)
    residual_norm = abs(3.0 - x0_hat.data[0])
    normalized = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.DPS, scale_param=0.5),
        random_mixture,
        SCHEDULE,
        first_coordinate_model,
        y,
        state,
    )
    raw = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.DPS, scale_param=0.5, normalize_by_residual=False),
        random_mixture,
        SCHEDULE,
        first_coordinate_model,
        y,
        state,
    )
    assert normalized.effective_scale == pytest.approx(0.5 / residual_norm)
    assert raw.effective_scale == 0.5
    assert np.array_equal(normalized.likelihood_score.data, raw.likelihood_score.data)


def test_dps_requires_measurement_noise(random_mixture):
    model = MeasurementModel(MatrixOperator.from_matrix([[1.0, 0.0]]), 0.0)
    state = DiffusionState(Signal.vector([0.0, 0.0]), 5)
    with pytest.raises(Degenerate):
        estimate_likelihood_score(
            GuidanceMethod(GuidanceNames.DPS), random_mixture, SCHEDULE, model, [1.0], state
        )


def test_dmps_matches_pseudo_likelihood_gradient(random_mixture, first_coordinate_model):
    t = 25
    alpha_bar = SCHEDULE.alpha_bar_at(t)
    x = np.array([0.6, -0.3])
    y = 1.1
    variance = first_coordinate_model.noise_var + (1 - alpha_bar) / alpha_bar
    expected = np.array([(y - x[0] / np.sqrt(alpha_bar)) / (variance * np.sqrt(alpha_bar)), 0.0])
    output = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.DMPS),
        random_mixture,
        SCHEDULE,
        first_coordinate_model,
        [y],
        DiffusionState(Signal(x), t),
    )
    assert np.allclose(output.likelihood_score.data, expected)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_estimates_are_finite_on_image_shapes(kind):
    shape = (4, 4)
    prior = GmmPrior.isotropic([0.5, 0.5], [np.zeros(16), np.ones(16)], [0.05, 0.05])
    model = MeasurementModel(IdentityOperator(in_dim=16, out_dim=16, image_shape=shape), 0.1)
    x_t = Signal(Rng(8).standard_normal(16), shape=shape)
    output = estimate_likelihood_score(
        GuidanceMethod(kind), prior, SCHEDULE, model, np.full(16, 0.5), DiffusionState(x_t, 30)
    )
    assert output.likelihood_score.shape == shape
    assert np.all(np.isfinite(output.likelihood_score.data))


def test_block_estimates_match_single_states(random_mixture, first_coordinate_model):
    block = Rng(9).standard_normal((5, 2))
    problem = make_problem(random_mixture, SCHEDULE, first_coordinate_model, [0.4])
    evaluation = problem.score_model.evaluate(SCHEDULE, block, 18)
    method = GuidanceMethod(GuidanceNames.PIGDM)
    output = estimate_block(method, problem, evaluation)
    assert output.effective_scale.shape == (5,)
    for row, estimate in zip(block, output.likelihood_score):
        single = estimate_likelihood_score(
            method,
            random_mixture,
            SCHEDULE,
            first_coordinate_model,
            [0.4],
            DiffusionState(Signal(row), 18),
        )
        assert np.allclose(single.likelihood_score.data, estimate)
    errors = approximation_error_block(method, problem, evaluation)
    assert errors.shape == (5,)
    assert np.all(errors >= 0)


def test_measurement_length_is_checked(random_mixture, first_coordinate_model):
    with pytest.raises(ContractViolation):
        make_problem(random_mixture, SCHEDULE, first_coordinate_model, [0.1, 0.2])


def test_external_score_model_matches_gmm(random_mixture, first_coordinate_model):
    analytic = GmmScoreModel(random_mixture)
    external = ExternalScoreModel(
        lambda x, t: analytic.evaluate(SCHEDULE, x, t).score, dim=random_mixture.dim
    )
    state = DiffusionState(Signal.vector([0.1, -0.5]), 12)
    method = GuidanceMethod(GuidanceNames.DPS, normalize_by_residual=False)
    expected = estimate_likelihood_score(
        method, random_mixture, SCHEDULE, first_coordinate_model, [1.0], state
    )
    wrapped = estimate_likelihood_score(
        method, external, SCHEDULE, first_coordinate_model, [1.0], state
    )
    assert np.allclose(wrapped.likelihood_score.data, expected.likelihood_score.data, atol=1e-6)


def test_exact_guidance_needs_mixture_prior(random_mixture, first_coordinate_model):
    external = ExternalScoreModel(lambda x, t: -x, dim=2)
    state = DiffusionState(Signal.vector([0.1, -0.5]), 12)
    with pytest.raises(ContractViolation):
        estimate_likelihood_score(
            GuidanceMethod(GuidanceNames.EXACT),
            external,
            SCHEDULE,
            first_coordinate_model,
            [1.0],
            state,
        )


def test_pigdm_exact_mode_falls_back_without_variance(first_coordinate_model, caplog):
    external = ExternalScoreModel(lambda x, t: -x, dim=2)
    state = DiffusionState(Signal.vector([0.1, -0.5]), 12)
    method = GuidanceMethod(GuidanceNames.PIGDM, pigdm_r2_mode=PigdmModes.EXACT_GAUSSIAN)
    heuristic = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.PIGDM), external, SCHEDULE, first_coordinate_model, [1.0], state
    )
    fallback = estimate_likelihood_score(
        method, external, SCHEDULE, first_coordinate_model, [1.0], state
    )
    assert np.allclose(fallback.likelihood_score.data, heuristic.likelihood_score.data)
    assert "heuristic" in caplog.text


AFFINE_KINDS = [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM]


def _predicted_measurement(kind, problem, x, t):
    """``A x0_hat`` for DPS and pseudoinverse guidance, ``A x_t / sqrt(alpha_bar)`` for DMPS."""
    evaluation = problem.score_model.evaluate(SCHEDULE, x, t)
    if kind == GuidanceNames.DMPS:
        return problem.model.operator.forward(evaluation.x / np.sqrt(evaluation.alpha_bar))[0]
    return problem.model.operator.forward(evaluation.denoised())[0]


@pytest.mark.parametrize("kind", AFFINE_KINDS)
def test_zero_residual_over_random_constructions(random_mixture, first_coordinate_model, kind):
    problem = make_problem(random_mixture, SCHEDULE, first_coordinate_model, [0.0])
    rng = Rng(41)
    for _ in range(50):
        x = 2.0 * rng.standard_normal(2)
        t = int(rng.generator.integers(1, SCHEDULE.T + 1))
        y = _predicted_measurement(kind, problem, x, t)
        output = estimate_likelihood_score(
            GuidanceMethod(kind),
            random_mixture,
            SCHEDULE,
            first_coordinate_model,
            y,
            DiffusionState(Signal(x), t),
        )
        assert np.linalg.norm(output.likelihood_score.data) < 1e-10


@pytest.mark.parametrize("kind", AFFINE_KINDS)
def test_estimates_are_linear_in_the_residual(wide_model, kind):
    prior = GmmPrior.isotropic([0.3, 0.7], [np.zeros(4), np.full(4, 1.5)], [0.4, 0.9])
    problem = make_problem(prior, SCHEDULE, wide_model, np.zeros(2))
    rng = Rng(42)
    for t in (3, 17, 36):
        x = rng.standard_normal(4)
        predicted = _predicted_measurement(kind, problem, x, t)
        residual = rng.standard_normal(2)
        state = DiffusionState(Signal(x), t)
        single, double = [
            estimate_likelihood_score(
                GuidanceMethod(kind), prior, SCHEDULE, wide_model, predicted + c * residual, state
            ).likelihood_score.data
            for c in (1.0, 2.0)
        ]
        assert np.allclose(double, 2.0 * single, rtol=1e-10, atol=1e-10)


def test_dps_is_least_accurate_at_the_start_of_the_trajectory(toy_task):
    sched = make_scaled_linear_schedule(1000)
    method = GuidanceMethod(GuidanceNames.DPS)
    rng = Rng(43)

    def mean_error(t, points):
        return np.mean(
            [
                approximation_error(
                    method,
                    toy_task.prior,
                    sched,
                    toy_task.model,
                    toy_task.y,
                    DiffusionState(Signal(x), t),
                )
                for x in points
            ]
        )

    noise_points = [rng.standard_normal(2) for _ in range(10)]
    near_data_points = [
        forward_noise(sched, Signal(mean), 1, rng).data for mean in toy_task.prior.means
    ]
    assert mean_error(sched.T, noise_points) > mean_error(1, near_data_points)
