"""
=============
   Sampler
=============

The guided reverse-diffusion loop. Each step evaluates the prior score, asks the
guidance method for a likelihood-score estimate, computes the adaptive scale,
combines the two and takes an ancestral step.

Chains are processed in fixed blocks of ``chain_block_size`` as ``(B, N)``
arrays. Every chain draws from its own stream keyed ``chain_{index}``, and the
block layout does not depend on the number of threads, so serial and threaded
runs give identical samples.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from saiplab.constants.metadata import SWEEP_COLUMNS, TRACE_COLUMNS, RunVariants
from saiplab.diffusion import NoiseSchedule, reverse_step_array
from saiplab.entity_types import GuidanceMethod, GuidanceProblem
from saiplab.exceptions import (
    ContractViolation,
    Degenerate,
    NotPositiveDefinite,
    ResourceLimit,
)
from saiplab.gmm import GmmPrior, LikelihoodOracle, exact_posterior, gmm_sample_array
from saiplab.guidance import estimate_block, make_problem
from saiplab.guidance_entities import GUIDANCE_TYPES
from saiplab.metrics import sliced_wasserstein
from saiplab.numerics import Rng, Signal, row_dot
from saiplab.operators import MeasurementModel
from saiplab.saip import (
    SaipConfig,
    SaipStepRecord,
    combine_array,
    scale_array,
    step_statistics,
)
from saiplab.score_models import ScoreModel
from saiplab.utilities import measure_resources

MODULE_ERRORS = (ContractViolation, Degenerate, NotPositiveDefinite, ResourceLimit)


@dataclass(frozen=True)
class SamplerConfig:
    schedule: NoiseSchedule
    guidance: GuidanceMethod
    saip: SaipConfig = field(default_factory=SaipConfig)
    chains: int = 1
    seed: int = 0
    chain_block_size: int = 256
    threads: int = 1
    track_memory: bool = False
    record_traces: bool = True
    show_progress: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ContractViolation(f"chains must be at least 1. Provided {self.chains}.")
        if self.chain_block_size < 1 or self.threads < 1:
            raise ContractViolation("chain_block_size and threads must be at least 1.")


@dataclass
class RunResult:
    """
    One entry per chain in ``samples``, ``traces`` and ``errors``. A failed chain
    has ``None`` as its sample and its error message in ``errors``.
    """

    samples: List[Optional[Signal]]
    traces: List[List[SaipStepRecord]]
    errors: List[Optional[str]]
    wall_time_seconds: float = 0.0
    peak_extra_memory_bytes: int = 0

    @property
    def succeeded(self) -> List[int]:
        return [i for i, error in enumerate(self.errors) if error is None]

    @property
    def failed(self) -> List[int]:
        return [i for i, error in enumerate(self.errors) if error is not None]

    def samples_array(self) -> np.ndarray:
        """Successful samples stacked as ``(n, N)``."""
        return np.stack([self.samples[i].data for i in self.succeeded])

    def posterior_mean(self) -> Signal:
        successful = self.succeeded
        if not successful:
            raise ContractViolation("Every chain failed; there is no posterior mean.")
        return Signal(self.samples_array().mean(axis=0), shape=self.samples[successful[0]].shape)


@dataclass
class _BlockResult:
    indices: List[int]
    samples: Optional[np.ndarray]
    statistics: Dict[str, np.ndarray]
    failed_step: np.ndarray
    errors: List[Optional[str]]
    aborted: bool = False


def _run_block(
    cfg: SamplerConfig,
    problem: GuidanceProblem,
    indices: List[int],
) -> _BlockResult:
    sched = cfg.schedule
    root = Rng(cfg.seed)
    rngs = [root.spawn(f"chain_{i}") for i in indices]
    dim = problem.score_model.dim
    n_steps = sched.T
    statistics = {
        key: np.full((n_steps, len(indices)), np.nan) for key in TRACE_COLUMNS[1:]
    }
    failed_step = np.full(len(indices), -1)
    errors: List[Optional[str]] = [None] * len(indices)
    x = np.stack([rng.standard_normal(dim) for rng in rngs])
    try:
        for step, t in enumerate(range(sched.T, 0, -1)):
            evaluation = problem.score_model.evaluate(sched, x, t)
            prior_score = evaluation.score
            output = estimate_block(cfg.guidance, problem, evaluation)
            likelihood_score = output.likelihood_score
            omega = cfg.saip.resolve_omega(output.effective_scale)
            if cfg.saip.enabled:
                s, degenerate = scale_array(
                    cfg.saip.variant,
                    omega,
                    row_dot(prior_score, prior_score),
                    row_dot(prior_score, likelihood_score),
                    cfg.saip.s_clamp,
                )
                if np.any(degenerate):
                    logger.debug(
                        f"Prior score vanished for {int(degenerate.sum())} chains at t={t}; using s=1."
                    )
            else:
                s = np.ones(len(indices))
            combined = combine_array(prior_score, likelihood_score, s, omega)
            if cfg.record_traces:
                for key, value in step_statistics(prior_score, likelihood_score, s, omega).items():
                    statistics[key][step] = value
            noise = np.stack([rng.standard_normal(dim) for rng in rngs]) if t > 1 else None
            x = reverse_step_array(sched, t, x, combined, noise)
            newly_failed = ~np.all(np.isfinite(x), axis=1) & (failed_step < 0)
            for row in np.flatnonzero(newly_failed):
                failed_step[row] = step
                errors[row] = f"Chain {indices[row]} produced a non-finite state at t={t}."
            # Failed rows are zeroed and ignored from here on
            x[failed_step >= 0] = 0.0
    except MODULE_ERRORS as e:
        logger.warning(f"Chains {indices[0]}-{indices[-1]} aborted: {e.message}")
        return _BlockResult(
            indices, None, statistics, failed_step, [e.message] * len(indices), aborted=True
        )
    return _BlockResult(indices, x, statistics, failed_step, errors)


def _run_chains(
    cfg: SamplerConfig,
    problem: GuidanceProblem,
    indices: List[int],
) -> List[_BlockResult]:
    """
    Runs one block. If a module error aborts it, its chains are rerun one at a
    time on their own streams so that only the offending chains fail.
    """
    block = _run_block(cfg, problem, indices)
    if not block.aborted or len(indices) == 1:
        return [block]
    logger.info(f"Rerunning chains {indices[0]}-{indices[-1]} one at a time.")
    return [_run_block(cfg, problem, [index]) for index in indices]


def _traces(cfg: SamplerConfig, block: _BlockResult) -> List[List[SaipStepRecord]]:
    if not cfg.record_traces or block.aborted:
        return [[] for _ in block.indices]
    timesteps = list(range(cfg.schedule.T, 0, -1))
    traces = []
    for column in range(len(block.indices)):
        failed_step = block.failed_step[column]
        n_steps = failed_step + 1 if failed_step >= 0 else len(timesteps)
        traces.append(
            [
                SaipStepRecord(
                    t=timesteps[step],
                    **{key: float(values[step, column]) for key, values in block.statistics.items()},
                )
                for step in range(n_steps)
            ]
        )
    return traces


def sample_posterior(
    cfg: SamplerConfig,
    prior: Union[GmmPrior, ScoreModel],
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
) -> RunResult:
    """
    Runs ``cfg.chains`` guided reverse chains from ``x_T ~ N(0, I)`` down to ``t = 0``.

    :param cfg: sampler configuration
    :param prior: Gaussian-mixture prior or any ScoreModel
    :param model: measurement model
    :param y: measurement
    :return: RunResult with one terminal sample, trace and error slot per chain
    """
    oracle = None
    if GUIDANCE_TYPES.get(cfg.guidance.kind).needs_oracle:
        if not isinstance(prior, GmmPrior):
            raise ContractViolation("Exact guidance needs a Gaussian-mixture prior.")
        oracle = LikelihoodOracle(prior, model)
    problem = make_problem(prior, cfg.schedule, model, y, oracle)
    image_shape = model.operator.image_shape
    shape = tuple(image_shape) if image_shape is not None else None
    blocks = [
        list(range(start, min(start + cfg.chain_block_size, cfg.chains)))
        for start in range(0, cfg.chains, cfg.chain_block_size)
    ]
    logger.debug(
        f"Sampling {cfg.chains} chains in {len(blocks)} blocks with {cfg.guidance.kind} guidance "
        f"(SAIP {'on' if cfg.saip.enabled else 'off'})."
    )
    with measure_resources(cfg.track_memory) as usage:
        if cfg.threads > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
                futures = [executor.submit(_run_chains, cfg, problem, b) for b in blocks]
                results = [
                    f.result()
                    for f in tqdm(futures, desc="Sampling blocks", disable=not cfg.show_progress)
                ]
        else:
            results = [
                _run_chains(cfg, problem, b)
                for b in tqdm(blocks, desc="Sampling blocks", disable=not cfg.show_progress)
            ]

    samples: List[Optional[Signal]] = []
    traces: List[List[SaipStepRecord]] = []
    errors: List[Optional[str]] = []
    for block in [block for chunk in results for block in chunk]:
        for column, error in enumerate(block.errors):
            errors.append(error)
            if error is None:
                samples.append(Signal(block.samples[column], shape=shape))
            else:
                samples.append(None)
        traces.extend(_traces(cfg, block))
    n_failed = sum(error is not None for error in errors)
    if n_failed:
        logger.warning(f"{n_failed} of {cfg.chains} chains failed.")
    return RunResult(
        samples=samples,
        traces=traces,
        errors=errors,
        wall_time_seconds=usage.wall_time_seconds,
        peak_extra_memory_bytes=usage.peak_extra_memory_bytes,
    )


def reference_samples(
    prior: GmmPrior, model: MeasurementModel, y: Union[Signal, np.ndarray], n: int, seed: int
) -> np.ndarray:
    """``n`` draws from the exact posterior, keyed ``reference`` off ``seed``."""
    return gmm_sample_array(exact_posterior(prior, model, y), Rng(seed).spawn("reference"), n)


def sweep_scale(
    cfg: SamplerConfig,
    prior: GmmPrior,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    omegas: Sequence[float],
    projections: Optional[int] = None,
    reference: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """
    For every guidance strength in ``omegas`` runs the baseline and the
    SAIP-enabled sampler and reports the sliced Wasserstein distance of their
    samples to exact posterior samples.

    The SAIP run inherits omega from the guidance method, and ``cfg.saip``
    supplies the variant and clamp.

    :return: DataFrame with columns omega, variant, sw_distance, wall_time_s
    """
    if reference is None:
        reference = reference_samples(prior, model, y, cfg.chains, cfg.seed)
    sw_kwargs = {} if projections is None else {"projections": projections}
    rows = []
    for omega in tqdm(omegas, desc="Sweeping omega", disable=not cfg.show_progress):
        guidance = replace(cfg.guidance, scale_param=float(omega))
        for variant, enabled in [(RunVariants.BASELINE, False), (RunVariants.SAIP, True)]:
            run_cfg = replace(
                cfg,
                guidance=guidance,
                saip=replace(cfg.saip, enabled=enabled, omega=None),
                record_traces=False,
                show_progress=False,
            )
            result = sample_posterior(run_cfg, prior, model, y)
            distance = (
                sliced_wasserstein(result.samples_array(), reference, **sw_kwargs)
                if result.succeeded
                else np.nan
            )
            logger.info(f"omega={omega:g} {variant}: sliced Wasserstein {distance:.4f}")
            rows.append(
                {
                    "omega": float(omega),
                    "variant": variant,
                    "sw_distance": distance,
                    "wall_time_s": result.wall_time_seconds,
                }
            )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
