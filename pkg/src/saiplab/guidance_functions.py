from typing import Tuple

import numpy as np
from loguru import logger

from saiplab.constants.data_values import RESIDUAL_NORM_FLOOR
from saiplab.constants.metadata import PigdmModes
from saiplab.entity_types import GuidanceMethod, GuidanceProblem
from saiplab.exceptions import Degenerate
from saiplab.numerics import row_dot
from saiplab.score_models import ScoreEvaluation


def _denoised_residual(
    problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> np.ndarray:
    x0_hat = evaluation.denoised()
    return problem.y - problem.model.operator.forward(x0_hat)


def estimate_dps(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> Tuple[np.ndarray, np.ndarray]:
    """
    DPS estimate ``-(1 / 2 sigma^2) grad ||y - A x0_hat(x_t)||^2 = J^T A^T r / sigma^2``.

    :param method: GuidanceMethod whose ``scale_param`` is the step coefficient zeta
    :param problem: GuidanceProblem holding the operator, noise level and measurement
    :param evaluation: ScoreEvaluation of the prior at the current block of chains
    :return: the estimate and the effective scale ``zeta / ||r||`` per chain
    """
    noise_var = problem.model.noise_var
    if noise_var <= 0:
        raise Degenerate("DPS guidance requires a positive measurement noise_std.")
    residual = _denoised_residual(problem, evaluation)
    estimate = evaluation.denoiser_vjp(problem.model.operator.transpose(residual)) / noise_var
    if not method.normalize_by_residual:
        return estimate, np.full(residual.shape[0], method.scale_param)
    norms = np.sqrt(row_dot(residual, residual))
    # A vanishing residual also vanishes the estimate, so any finite scale is neutral
    safe_norms = np.where(norms < RESIDUAL_NORM_FLOOR, 1.0, norms)
    return estimate, method.scale_param / safe_norms


def estimate_pigdm(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pseudoinverse-guided estimate ``J^T A^T (r_t^2 A A^T + sigma^2 I)^-1 (y - A x0_hat)``.

    With the heuristic mode ``r_t^2 = 1 - alpha_bar_t``. The exact Gaussian mode uses
    the prior's average conditional variance ``tr(Var(x_0 | x_t)) / dim``, which makes
    the estimate exact for a single isotropic Gaussian prior.
    """
    alpha_bar = evaluation.alpha_bar
    if method.pigdm_r2_mode == PigdmModes.EXACT_GAUSSIAN:
        r2 = problem.score_model.conditional_variance(problem.sched, evaluation.t)
        if r2 is None:
            logger.warning(
                "Score model does not provide a conditional variance. "
                "Falling back to the heuristic r^2."
            )
            r2 = 1.0 - alpha_bar
    else:
        r2 = 1.0 - alpha_bar
    operator = problem.model.operator
    residual = _denoised_residual(problem, evaluation)
    solved = operator.solve_gram(residual, r2, problem.model.noise_var)
    estimate = evaluation.denoiser_vjp(operator.transpose(solved))
    return estimate, np.full(residual.shape[0], method.scale_param)


def estimate_dmps(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of the uninformative-prior pseudo-likelihood
    ``log N(y; A x_t / sqrt(alpha_bar), sigma^2 I + ((1 - alpha_bar) / alpha_bar) A A^T)``.
    """
    alpha_bar = evaluation.alpha_bar
    scale = np.sqrt(alpha_bar)
    operator = problem.model.operator
    residual = problem.y - operator.forward(evaluation.x / scale)
    solved = operator.solve_gram(residual, (1.0 - alpha_bar) / alpha_bar, problem.model.noise_var)
    estimate = operator.transpose(solved) / scale
    return estimate, np.full(residual.shape[0], method.scale_param)


def estimate_exact(
    method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
) -> Tuple[np.ndarray, np.ndarray]:
    oracle = problem.get_oracle()
    diffused = problem.score_model.diffused(problem.sched, evaluation.t)
    estimate = oracle.score(diffused, problem.y, evaluation.x)
    return estimate, np.full(evaluation.x.shape[0], method.scale_param)
