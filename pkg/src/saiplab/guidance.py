"""
============
   Guidance
============

Likelihood-score approximators behind one interface: DPS, DMPS, pseudoinverse
guidance and the exact Gaussian-mixture oracle. Each returns an unscaled
estimate of ``grad log p(y | x_t)`` and the scale the sampler should apply to it.

.. code-block:: pycon

    >>> method = GuidanceMethod(GuidanceNames.PIGDM, scale_param=1.0)
    >>> output = estimate_likelihood_score(method, prior, sched, model, y, state)
    >>> output.likelihood_score, output.effective_scale
"""

from typing import Optional, Union

import numpy as np

from saiplab.constants.data_values import RESIDUAL_NORM_FLOOR
from saiplab.constants.metadata import GuidanceNames
from saiplab.diffusion import DiffusionState, NoiseSchedule
from saiplab.entity_types import GuidanceMethod, GuidanceOutput, GuidanceProblem
from saiplab.gmm import GmmPrior, LikelihoodOracle
from saiplab.guidance_entities import GUIDANCE_TYPES
from saiplab.numerics import Signal, as_array, row_dot
from saiplab.operators import MeasurementModel
from saiplab.score_models import GmmScoreModel, ScoreEvaluation, ScoreModel


def make_problem(
    prior: Union[GmmPrior, ScoreModel],
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    oracle: Optional[LikelihoodOracle] = None,
) -> GuidanceProblem:
    score_model = GmmScoreModel(prior) if isinstance(prior, GmmPrior) else prior
    return GuidanceProblem(score_model, sched, model, as_array(y), oracle)


def estimate_block(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> GuidanceOutput:
    """Estimates the likelihood score of a whole block of chains at once."""
    return GUIDANCE_TYPES.get(method.kind)(method, problem, evaluation)


def estimate_likelihood_score(
    method: GuidanceMethod,
    prior: Union[GmmPrior, ScoreModel],
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    state: DiffusionState,
) -> GuidanceOutput:
    """
    Kind-specific estimate of ``grad log p(y | x_t)`` at a single state.

    :param method: approximator and its scale
    :param prior: Gaussian-mixture prior or any ScoreModel
    :param sched: noise schedule
    :param model: measurement model
    :param y: measurement
    :param state: current diffusion state
    :return: GuidanceOutput with a finite ``likelihood_score`` Signal and a scalar
        ``effective_scale``
    :raises Degenerate: when a linear solve of the approximator is singular
    """
    sched.check_timestep(state.t)
    problem = make_problem(prior, sched, model, y)
    evaluation = problem.score_model.evaluate(sched, state.x_t.data, state.t)
    output = estimate_block(method, problem, evaluation)
    return GuidanceOutput(
        Signal(output.likelihood_score[0], shape=state.x_t.shape),
        float(output.effective_scale[0]),
    )


def approximation_error(
    method: GuidanceMethod,
    prior: GmmPrior,
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    state: DiffusionState,
) -> float:
    """``||estimate - exact|| / (||exact|| + 1e-12)`` against the exact likelihood score."""
    estimate = estimate_likelihood_score(method, prior, sched, model, y, state)
    exact = estimate_likelihood_score(
        GuidanceMethod(GuidanceNames.EXACT), prior, sched, model, y, state
    )
    difference = estimate.likelihood_score.data - exact.likelihood_score.data
    return float(
        np.linalg.norm(difference) / (np.linalg.norm(exact.likelihood_score.data) + RESIDUAL_NORM_FLOOR)
    )


def approximation_error_block(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> np.ndarray:
    """Per-chain relative error of a block against the exact oracle."""
    estimate = estimate_block(method, problem, evaluation).likelihood_score
    exact = GUIDANCE_TYPES.exact(GuidanceMethod(GuidanceNames.EXACT), problem, evaluation)
    difference = estimate - exact.likelihood_score
    return np.sqrt(row_dot(difference, difference)) / (
        np.sqrt(row_dot(exact.likelihood_score, exact.likelihood_score)) + RESIDUAL_NORM_FLOOR
    )
