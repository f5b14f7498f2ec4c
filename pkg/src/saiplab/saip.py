"""
=====================
   Adaptive Prior Scale
=====================

Closed-form adaptive scale ``s`` for the prior score and the combined posterior
score ``[1 + (s - 1)(1 - omega)] g + omega l``, where ``g`` is the prior score,
``l`` the likelihood-score estimate and ``omega`` the guidance strength. With
``s = 1`` the combination is the plain guided update ``g + omega l``.

Two closed forms are available:

``eq12_posterior``
    ``s = <g + omega l, g> / ||g||^2``, the projection of the guided posterior
    score onto the prior-score direction (default).
``eq11_likelihood``
    ``s = <g, l> / ||g||^2``, the minimizer of ``||-s g + l||^2``.

Per-step diagnostics are collected as :class:`SaipStepRecord` traces and
round-trip through CSV.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from saiplab.constants.data_values import SCORE_NORM_SQ_FLOOR
from saiplab.constants.metadata import SAIP_VARIANTS, TRACE_COLUMNS, SaipVariants
from saiplab.exceptions import ContractViolation, DataSourceError
from saiplab.numerics import Signal, as_array, check_same_length, row_dot


@dataclass(frozen=True)
class SaipConfig:
    """
    ``omega = None`` inherits the guidance method's effective scale at every step.
    ``s_clamp``, when set, must contain 1.
    """

    enabled: bool = True
    omega: Optional[float] = None
    variant: str = SaipVariants.EQ12_POSTERIOR
    s_clamp: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.omega is not None and not np.isfinite(self.omega):
            raise ContractViolation(f"omega must be finite. Provided {self.omega}.")
        if self.variant not in SAIP_VARIANTS:
            raise ContractViolation(
                f"Unknown SAIP variant '{self.variant}'. Choose from {SAIP_VARIANTS}."
            )
        if self.s_clamp is not None:
            low, high = self.s_clamp
            if not low <= 1.0 <= high:
                raise ContractViolation(f"s_clamp {self.s_clamp} must contain 1.")
            object.__setattr__(self, "s_clamp", (float(low), float(high)))

    def resolve_omega(self, effective_scale: Union[float, np.ndarray, None] = None):
        if self.omega is not None:
            return self.omega
        if effective_scale is None:
            raise ContractViolation("omega is not set and no effective scale was provided.")
        return effective_scale


@dataclass(frozen=True)
class SaipStepRecord:
    t: int
    s: float
    omega: float
    prior_norm_sq: float
    dot_prior_likelihood: float
    dot_prior_posterior: float
    offset_norm: float

    @property
    def degenerate(self) -> bool:
        """True when the prior score vanished and ``s`` fell back to 1."""
        return self.prior_norm_sq < SCORE_NORM_SQ_FLOOR


def scale_array(
    variant: str,
    omega: Union[float, np.ndarray],
    prior_norm_sq: np.ndarray,
    dot_prior_likelihood: np.ndarray,
    s_clamp: Optional[Tuple[float, float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise closed-form scale from precomputed inner products.

    :return: the scales and a boolean mask of rows that hit the degenerate fallback
    """
    prior_norm_sq = np.asarray(prior_norm_sq, dtype=np.float64)
    degenerate = prior_norm_sq < SCORE_NORM_SQ_FLOOR
    safe_norm_sq = np.where(degenerate, 1.0, prior_norm_sq)
    if variant == SaipVariants.EQ11_LIKELIHOOD:
        numerator = dot_prior_likelihood
    else:
        # <g + omega l, g>
        numerator = prior_norm_sq + omega * dot_prior_likelihood
    s = np.where(degenerate, 1.0, numerator / safe_norm_sq)
    if s_clamp is not None:
        s = np.clip(s, s_clamp[0], s_clamp[1])
    return s, degenerate


def compute_scale(
    cfg: SaipConfig,
    prior_score: Union[Signal, np.ndarray],
    likelihood_score: Union[Signal, np.ndarray],
    omega: Optional[float] = None,
) -> float:
    """
    Closed-form scale ``s`` of the configured variant, clamped to ``cfg.s_clamp``.
    Returns 1 when ``||g||^2 < 1e-300``.

    :param omega: guidance strength, overriding ``cfg.omega``
    """
    g, l = as_array(prior_score), as_array(likelihood_score)
    check_same_length(g, l, "compute_scale")
    if omega is None:
        # eq11 does not depend on omega
        omega = 0.0 if cfg.variant == SaipVariants.EQ11_LIKELIHOOD else cfg.resolve_omega()
    s, _ = scale_array(cfg.variant, omega, np.dot(g, g), np.dot(g, l), cfg.s_clamp)
    return float(s)


def combine_array(
    prior_score: np.ndarray,
    likelihood_score: np.ndarray,
    s: Union[float, np.ndarray],
    omega: Union[float, np.ndarray],
) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if s.ndim:
        s = s[..., None]
    if omega.ndim:
        omega = omega[..., None]
    # The factor is exactly 1.0 when s == 1, so the result matches g + omega * l bitwise
    factor = 1.0 + (s - 1.0) * (1.0 - omega)
    return factor * prior_score + omega * likelihood_score


def combine_scores(
    cfg: SaipConfig,
    prior_score: Union[Signal, np.ndarray],
    likelihood_score: Union[Signal, np.ndarray],
    s: float,
    omega: Optional[float] = None,
) -> Signal:
    """
    ``[1 + (s - 1)(1 - omega)] g + omega l``; disabled SAIP uses ``s = 1``.

    :raises ContractViolation: on a dimension mismatch
    """
    g, l = as_array(prior_score), as_array(likelihood_score)
    check_same_length(g, l, "combine_scores")
    omega = cfg.resolve_omega() if omega is None else omega
    if not cfg.enabled:
        s = 1.0
    shape = prior_score.shape if isinstance(prior_score, Signal) else None
    return Signal(combine_array(g, l, s, omega), shape=shape)


def upper_bound_loss(
    s: float, prior_score: Union[Signal, np.ndarray], likelihood_score: Union[Signal, np.ndarray]
) -> float:
    """``||-s g + l||^2``."""
    g, l = as_array(prior_score), as_array(likelihood_score)
    check_same_length(g, l, "upper_bound_loss")
    difference = l - s * g
    return float(np.dot(difference, difference))


def step_statistics(
    prior_score: np.ndarray,
    likelihood_score: np.ndarray,
    s: np.ndarray,
    omega: Union[float, np.ndarray],
) -> Dict[str, np.ndarray]:
    """Row-wise trace fields of one reverse step for a block of chains."""
    prior_norm_sq = row_dot(prior_score, prior_score)
    dot_prior_likelihood = row_dot(prior_score, likelihood_score)
    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), prior_norm_sq.shape)
    return {
        "s": np.asarray(s, dtype=np.float64),
        "omega": omega,
        "prior_norm_sq": prior_norm_sq,
        "dot_prior_likelihood": dot_prior_likelihood,
        "dot_prior_posterior": prior_norm_sq + omega * dot_prior_likelihood,
        "offset_norm": np.abs((s - 1.0) * (1.0 - omega)) * np.sqrt(prior_norm_sq),
    }


def record_step(
    trace: List[SaipStepRecord],
    t: int,
    s: float,
    omega: float,
    prior_score: Union[Signal, np.ndarray],
    likelihood_score: Union[Signal, np.ndarray],
) -> List[SaipStepRecord]:
    """Appends the fully populated record of one reverse step to ``trace``."""
    g = np.atleast_2d(as_array(prior_score))
    l = np.atleast_2d(as_array(likelihood_score))
    stats = step_statistics(g, l, np.array([s]), omega)
    trace.append(
        SaipStepRecord(t=int(t), **{key: float(value[0]) for key, value in stats.items()})
    )
    return trace


def trace_to_frame(trace: List[SaipStepRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(record) for record in trace], columns=TRACE_COLUMNS)


def trace_from_frame(frame: pd.DataFrame) -> List[SaipStepRecord]:
    missing = [column for column in TRACE_COLUMNS if column not in frame.columns]
    if missing:
        raise DataSourceError(f"Trace is missing columns {missing}.")
    return [
        SaipStepRecord(
            t=int(row.t),
            **{column: float(getattr(row, column)) for column in TRACE_COLUMNS[1:]},
        )
        for row in frame[TRACE_COLUMNS].itertuples(index=False)
    ]


def write_trace_csv(trace: List[SaipStepRecord], path: Union[str, Path]) -> None:
    trace_to_frame(trace).to_csv(path, index=False, float_format="%.17g")


def read_trace_csv(path: Union[str, Path]) -> List[SaipStepRecord]:
    """
    :raises DataSourceError: when the file is unreadable, has the wrong columns or
        holds non-numeric values
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataSourceError(f"Could not read trace '{path}': {e}") from None
    try:
        return trace_from_frame(frame)
    except (TypeError, ValueError) as e:
        raise DataSourceError(f"Malformed trace '{path}': {e}") from None


def _mean_abs_deviation(values: np.ndarray) -> float:
    return float(np.mean(np.abs(values - 1.0))) if values.size else 0.0


def summarize_trace(trace: List[SaipStepRecord]) -> Dict[str, Union[float, int, bool]]:
    """
    Summary of an s-curve in sampling order (largest t first): mean ``|s - 1|`` over
    the first and last deciles and over the early, mid and late thirds, the
    minimum ``s`` and the number of negative values. ``early_response`` is True
    when the early third deviates more than the middle third.
    """
    if not trace:
        raise ContractViolation("Cannot summarize an empty trace.")
    s = np.array([record.s for record in trace])
    decile = max(1, s.size // 10)
    early, mid, late = np.array_split(s, 3)
    summary = {
        "steps": int(s.size),
        "first_decile_mean_abs_dev": _mean_abs_deviation(s[:decile]),
        "last_decile_mean_abs_dev": _mean_abs_deviation(s[-decile:]),
        "early_mean_abs_dev": _mean_abs_deviation(early),
        "mid_mean_abs_dev": _mean_abs_deviation(mid),
        "late_mean_abs_dev": _mean_abs_deviation(late),
        "min_s": float(s.min()),
        "max_s": float(s.max()),
        "negative_count": int(np.sum(s < 0)),
        "degenerate_count": int(sum(record.degenerate for record in trace)),
    }
    summary["early_response"] = bool(summary["early_mean_abs_dev"] > summary["mid_mean_abs_dev"])
    return summary
