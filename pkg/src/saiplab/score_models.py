"""
Prior score models.

A score model returns ``grad log p(x_t)`` for a block of chains together with the
products with the Jacobian of the Tweedie denoiser
``J = d x0_hat / d x_t = (I + (1 - alpha_bar) H) / sqrt(alpha_bar)``, where ``H``
is the Hessian of ``log p(x_t)``. ``H`` is symmetric, so ``J^T w = J w``.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from saiplab.constants.data_values import FINITE_DIFFERENCE_STEP
from saiplab.diffusion import NoiseSchedule, denoise_array
from saiplab.gmm import DiffusedGmm, GmmPrior, MixtureTerms, diffuse
from saiplab.numerics import row_dot


@dataclass
class ScoreEvaluation:
    """The prior score at ``(x, t)`` and the means to differentiate the denoiser there."""

    x: np.ndarray
    t: int
    alpha_bar: float
    score: np.ndarray
    hessian_vector_product: Callable[[np.ndarray], np.ndarray]

    def denoised(self) -> np.ndarray:
        return denoise_array(self.alpha_bar, self.x, self.score)

    def denoiser_vjp(self, w: np.ndarray) -> np.ndarray:
        """``J^T w`` for the Tweedie denoiser Jacobian ``J``."""
        return (w + (1.0 - self.alpha_bar) * self.hessian_vector_product(w)) / np.sqrt(
            self.alpha_bar
        )


class ScoreModel(ABC):
    dim: int

    @abstractmethod
    def evaluate(self, sched: NoiseSchedule, x: np.ndarray, t: int) -> ScoreEvaluation:
        pass

    def conditional_variance(self, sched: NoiseSchedule, t: int) -> Optional[float]:
        """Average per-coordinate ``Var(x_0 | x_t)`` when the model knows it."""
        return None


class GmmScoreModel(ScoreModel):
    """Analytic scores and Hessian-vector products of a Gaussian-mixture prior."""

    def __init__(self, prior: GmmPrior):
        self.prior = prior
        self.dim = prior.dim

    def diffused(self, sched: NoiseSchedule, t: int) -> DiffusedGmm:
        return diffuse(self.prior, sched, t)

    def evaluate(self, sched: NoiseSchedule, x: np.ndarray, t: int) -> ScoreEvaluation:
        diffused = self.diffused(sched, t)
        x = np.atleast_2d(x)
        terms: MixtureTerms = diffused.evaluate(x)
        return ScoreEvaluation(
            x=x,
            t=t,
            alpha_bar=diffused.alpha_bar,
            score=terms.score,
            hessian_vector_product=lambda v: diffused.hessian_vector_product(terms, v),
        )

    def conditional_variance(self, sched: NoiseSchedule, t: int) -> float:
        """
        ``tr(V) / dim`` of ``V = Var(x_0 | x_t)``. Exact for a single component;
        for mixtures the per-component traces are averaged with the prior weights.
        """
        diffused = self.diffused(sched, t)
        traces = [
            np.mean(diffused.conditional_covariance_values(k))
            for k in range(self.prior.n_components)
        ]
        return float(np.dot(self.prior.weights, traces))


class ExternalScoreModel(ScoreModel):
    """
    Wraps any callable ``(x_t, t) -> score`` acting on ``(B, N)`` arrays, e.g. a
    learned network converted with :func:`saiplab.diffusion.epsilon_to_score`.
    Hessian-vector products use central differences of the score.
    """

    def __init__(
        self,
        score_function: Callable[[np.ndarray, int], np.ndarray],
        dim: int,
        step: float = FINITE_DIFFERENCE_STEP,
    ):
        self.score_function = score_function
        self.dim = dim
        self.step = step

    def _hessian_vector_product(self, x: np.ndarray, t: int, v: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(v)
        norms = np.sqrt(row_dot(v, v))[:, None]
        direction = np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)
        forward = self.score_function(x + self.step * direction, t)
        backward = self.score_function(x - self.step * direction, t)
        return norms * (forward - backward) / (2.0 * self.step)

    def evaluate(self, sched: NoiseSchedule, x: np.ndarray, t: int) -> ScoreEvaluation:
        x = np.atleast_2d(x)
        return ScoreEvaluation(
            x=x,
            t=t,
            alpha_bar=sched.alpha_bar_at(t),
            score=np.asarray(self.score_function(x, t), dtype=np.float64),
            hessian_vector_product=lambda v: self._hessian_vector_product(x, t, v),
        )
