"""
=====================
   Diffusion Process
=====================

Discrete DDPM machinery: linear noise schedules, forward noising ``q(x_t | x_0)``,
Tweedie posterior-mean denoising and the ancestral reverse step.

Scores are always exchanged as ``grad log p``. An external network that predicts
``eps`` converts through :func:`epsilon_to_score`.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from saiplab.constants.data_values import (
    ALPHA_BAR_RTOL,
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    REFERENCE_NUM_STEPS,
)
from saiplab.exceptions import ContractViolation
from saiplab.numerics import Rng, Signal, as_array, check_same_length


@dataclass(frozen=True)
class NoiseSchedule:
    """
    ``beta[t - 1]`` and ``alpha_bar[t - 1]`` hold the values of timestep ``t`` for
    ``t = 1..T``.
    """

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        alpha_bar = np.array(self.alpha_bar, dtype=np.float64)
        if beta.shape != (self.T,) or alpha_bar.shape != (self.T,):
            raise ContractViolation(f"Schedule arrays must have length T={self.T}.")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ContractViolation("Every beta_t must lie strictly between 0 and 1.")
        if not np.allclose(alpha_bar, np.cumprod(1.0 - beta), rtol=ALPHA_BAR_RTOL, atol=0.0):
            raise ContractViolation("alpha_bar must be the cumulative product of 1 - beta.")
        if np.any(np.diff(alpha_bar) >= 0):
            raise ContractViolation("alpha_bar must be strictly decreasing in t.")
        beta.setflags(write=False)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    def check_timestep(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ContractViolation(f"Timestep {t} outside of the schedule range [1, {self.T}].")

    def beta_at(self, t: int) -> float:
        self.check_timestep(t)
        return float(self.beta[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        self.check_timestep(t)
        return float(self.alpha_bar[t - 1])


@dataclass(frozen=True)
class DiffusionState:
    """
    A state at timestep ``t``. States carry no schedule; every operation that takes
    one also takes the schedule and rejects ``t > T``.
    """

    x_t: Signal
    t: int

    def __post_init__(self):
        if self.t < 0:
            raise ContractViolation(f"Timestep must be nonnegative. Provided {self.t}.")


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """
    Linearly interpolated ``beta_t`` with the cumulative product ``alpha_bar_t``
    precomputed.

    :param T: number of diffusion steps, at least 1
    :param beta_start: beta_1
    :param beta_end: beta_T
    :raises ContractViolation: unless ``0 < beta_start <= beta_end < 1`` and ``T >= 1``
    """
    if T < 1:
        raise ContractViolation(f"T must be at least 1. Provided {T}.")
    if not 0 < beta_start <= beta_end < 1:
        raise ContractViolation(
            f"Require 0 < beta_start <= beta_end < 1. Provided ({beta_start}, {beta_end})."
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


def make_scaled_linear_schedule(
    T: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """
    Linear schedule whose 1000-step endpoints are rescaled by ``1000 / T`` so that
    short runs still end close to pure noise. ``T = 1000`` gives the plain schedule.
    """
    scale = REFERENCE_NUM_STEPS / T
    return make_linear_schedule(T, min(beta_start * scale, 0.999), min(beta_end * scale, 0.999))


def forward_noise(sched: NoiseSchedule, x0: Signal, t: int, rng: Rng) -> Signal:
    """Samples ``x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps``."""
    alpha_bar = sched.alpha_bar_at(t)
    noise = rng.standard_normal(len(x0))
    return Signal(
        np.sqrt(alpha_bar) * x0.data + np.sqrt(1.0 - alpha_bar) * noise, shape=x0.shape
    )


def denoise_array(alpha_bar: float, x_t: np.ndarray, prior_score: np.ndarray) -> np.ndarray:
    if alpha_bar <= 0:
        raise ContractViolation("Tweedie denoising requires alpha_bar_t > 0.")
    return (x_t + (1.0 - alpha_bar) * prior_score) / np.sqrt(alpha_bar)


def tweedie_denoise(
    sched: NoiseSchedule, state: DiffusionState, prior_score: Union[Signal, np.ndarray]
) -> Signal:
    """Posterior mean ``E[x_0 | x_t] = (x_t + (1 - alpha_bar_t) score) / sqrt(alpha_bar_t)``."""
    sched.check_timestep(state.t)
    score = as_array(prior_score)
    check_same_length(state.x_t.data, score, "tweedie_denoise")
    x0_hat = denoise_array(sched.alpha_bar_at(state.t), state.x_t.data, score)
    return Signal(x0_hat, shape=state.x_t.shape)


def reverse_step_array(
    sched: NoiseSchedule, t: int, x_t: np.ndarray, posterior_score: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """
    Ancestral update on a block of chains. ``noise`` is ignored at ``t = 1``,
    where the step is deterministic.
    """
    beta = sched.beta_at(t)
    mean = (x_t + beta * posterior_score) / np.sqrt(1.0 - beta)
    if t == 1:
        return mean
    return mean + np.sqrt(beta) * noise


def reverse_step(
    sched: NoiseSchedule,
    state: DiffusionState,
    posterior_score: Union[Signal, np.ndarray],
    rng: Rng,
) -> DiffusionState:
    """
    One DDPM step with the large variance ``sigma_t^2 = beta_t``:
    ``x_{t-1} = (x_t + beta_t score) / sqrt(1 - beta_t) + sqrt(beta_t) eps``.
    No noise is drawn at ``t = 1``.
    """
    if state.t < 1:
        raise ContractViolation("reverse_step requires t >= 1.")
    sched.check_timestep(state.t)
    score = as_array(posterior_score)
    check_same_length(state.x_t.data, score, "reverse_step")
    noise = rng.standard_normal(len(state.x_t)) if state.t > 1 else None
    x_prev = reverse_step_array(sched, state.t, state.x_t.data, score, noise)
    return DiffusionState(Signal(x_prev, shape=state.x_t.shape), state.t - 1)


def score_to_epsilon(sched: NoiseSchedule, t: int, score: Union[Signal, np.ndarray]) -> np.ndarray:
    """``eps = -sqrt(1 - alpha_bar_t) * score``."""
    return -np.sqrt(1.0 - sched.alpha_bar_at(t)) * as_array(score)


def epsilon_to_score(sched: NoiseSchedule, t: int, epsilon: Union[Signal, np.ndarray]) -> np.ndarray:
    return -as_array(epsilon) / np.sqrt(1.0 - sched.alpha_bar_at(t))
