from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from saiplab.constants.metadata import GuidanceNames, PIGDM_MODES, PigdmModes
from saiplab.diffusion import NoiseSchedule
from saiplab.exceptions import ContractViolation
from saiplab.gmm import LikelihoodOracle
from saiplab.operators import MeasurementModel
from saiplab.score_models import GmmScoreModel, ScoreEvaluation, ScoreModel


@dataclass(frozen=True)
class GuidanceMethod:
    """
    Which likelihood-score approximator to use and how strongly to apply it.

    ``scale_param`` is the guidance strength; for DPS it is the step coefficient
    zeta, divided by the residual norm each step unless ``normalize_by_residual``
    is False.
    """

    kind: str
    scale_param: float = 1.0
    pigdm_r2_mode: str = PigdmModes.HEURISTIC
    normalize_by_residual: bool = True

    def __post_init__(self):
        known = [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM, GuidanceNames.EXACT]
        if self.kind not in known:
            raise ContractViolation(f"Unknown guidance kind '{self.kind}'. Choose from {known}.")
        if not np.isfinite(self.scale_param) or self.scale_param <= 0:
            raise ContractViolation(f"scale_param must be positive. Provided {self.scale_param}.")
        if self.pigdm_r2_mode not in PIGDM_MODES:
            raise ContractViolation(
                f"Unknown pigdm_r2_mode '{self.pigdm_r2_mode}'. Choose from {PIGDM_MODES}."
            )


@dataclass(frozen=True)
class GuidanceOutput:
    """
    ``likelihood_score`` is the unscaled estimate of ``grad log p(y | x_t)``;
    ``effective_scale`` the strength actually applied this step (one per chain
    for a block).
    """

    likelihood_score: np.ndarray
    effective_scale: np.ndarray


@dataclass(frozen=True, eq=False)
class GuidanceProblem:
    """Everything an approximator needs besides the current state."""

    score_model: ScoreModel
    sched: NoiseSchedule
    model: MeasurementModel
    y: np.ndarray
    oracle: Optional[LikelihoodOracle] = None

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if y.size != self.model.operator.out_dim:
            raise ContractViolation(
                f"Measurement of length {y.size} does not match the operator output "
                f"dimension {self.model.operator.out_dim}."
            )
        if self.score_model.dim != self.model.operator.in_dim:
            raise ContractViolation(
                f"Prior dimension {self.score_model.dim} does not match the operator input "
                f"dimension {self.model.operator.in_dim}."
            )
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def get_oracle(self) -> LikelihoodOracle:
        if self.oracle is not None:
            return self.oracle
        if not isinstance(self.score_model, GmmScoreModel):
            raise ContractViolation("Exact likelihood scores need a Gaussian-mixture prior.")
        oracle = LikelihoodOracle(self.score_model.prior, self.model)
        object.__setattr__(self, "oracle", oracle)
        return oracle


@dataclass
class GuidanceType:
    """
    Defines a likelihood-score approximator.

    The estimator takes the method settings, the problem and the prior score
    evaluation of a block of chains, and returns the likelihood-score estimate
    of each chain together with the effective scale to apply to it.
    """

    name: str
    estimator: Callable[
        [GuidanceMethod, GuidanceProblem, ScoreEvaluation], Tuple[np.ndarray, np.ndarray]
    ]
    default_scale: float = 1.0
    needs_oracle: bool = False

    def __call__(
        self, method: GuidanceMethod, problem: GuidanceProblem, evaluation: ScoreEvaluation
    ) -> GuidanceOutput:
        likelihood_score, effective_scale = self.estimator(method, problem, evaluation)
        effective_scale = np.broadcast_to(
            np.asarray(effective_scale, dtype=np.float64), (likelihood_score.shape[0],)
        ).copy()
        return GuidanceOutput(likelihood_score, effective_scale)
