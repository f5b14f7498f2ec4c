from dataclasses import replace

import numpy as np
import pytest

from saiplab.constants.metadata import GuidanceNames, RunVariants, SaipVariants, SWEEP_COLUMNS
from saiplab.diffusion import make_scaled_linear_schedule
from saiplab.entity_types import GuidanceMethod
from saiplab.exceptions import ContractViolation
from saiplab.gmm import GmmPrior, exact_posterior
from saiplab.numerics import Rng, Signal
from saiplab.operators import IdentityOperator, MeasurementModel
from saiplab.saip import SaipConfig
from saiplab.sampler import RunResult, SamplerConfig, reference_samples, sample_posterior, sweep_scale
from saiplab.score_models import ExternalScoreModel


def _config(**kwargs) -> SamplerConfig:
    defaults = dict(
        schedule=make_scaled_linear_schedule(20),
        guidance=GuidanceMethod(GuidanceNames.DPS),
        saip=SaipConfig(),
        chains=6,
        seed=123,
        chain_block_size=4,
    )
    defaults.update(kwargs)
    return SamplerConfig(**defaults)


def test_sampler_config_contract():
    with pytest.raises(ContractViolation):
        _config(chains=0)
    with pytest.raises(ContractViolation):
        _config(threads=0)


def test_run_shapes(toy_task):
    result = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    assert len(result.samples) == len(result.traces) == len(result.errors) == 6
    assert result.succeeded == list(range(6))
    assert result.failed == []
    assert result.samples_array().shape == (6, 2)
    assert len(result.posterior_mean()) == 2
    for trace in result.traces:
        assert [record.t for record in trace] == list(range(20, 0, -1))
        assert all(np.isfinite(record.s) for record in trace)


def test_runs_are_reproducible(toy_task):
    first = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    second = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    assert np.array_equal(first.samples_array(), second.samples_array())
    assert first.traces == second.traces


def test_seed_changes_samples(toy_task):
    first = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    second = sample_posterior(_config(seed=124), toy_task.prior, toy_task.model, toy_task.y)
    assert not np.array_equal(first.samples_array(), second.samples_array())


def test_threads_and_blocks_do_not_change_samples(toy_task):
    serial = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    threaded = sample_posterior(_config(threads=3), toy_task.prior, toy_task.model, toy_task.y)
    single_block = sample_posterior(
        _config(chain_block_size=64), toy_task.prior, toy_task.model, toy_task.y
    )
    assert np.array_equal(serial.samples_array(), threaded.samples_array())
    assert np.allclose(serial.samples_array(), single_block.samples_array(), rtol=0, atol=1e-9)


def test_disabled_saip_matches_unit_clamp(toy_task):
    disabled = _config(saip=SaipConfig(enabled=False))
    clamped = _config(saip=SaipConfig(enabled=True, s_clamp=(1.0, 1.0)))
    a = sample_posterior(disabled, toy_task.prior, toy_task.model, toy_task.y)
    b = sample_posterior(clamped, toy_task.prior, toy_task.model, toy_task.y)
    assert np.array_equal(a.samples_array(), b.samples_array())
    assert all(record.s == 1.0 for trace in a.traces for record in trace)


def test_saip_changes_the_trajectory(toy_task):
    baseline = sample_posterior(
        _config(saip=SaipConfig(enabled=False)), toy_task.prior, toy_task.model, toy_task.y
    )
    adaptive = sample_posterior(_config(), toy_task.prior, toy_task.model, toy_task.y)
    assert not np.array_equal(baseline.samples_array(), adaptive.samples_array())
    assert any(record.s != 1.0 for trace in adaptive.traces for record in trace)


def test_trace_fields_are_consistent(toy_task):
    cfg = _config(saip=SaipConfig(omega=0.5, variant=SaipVariants.EQ11_LIKELIHOOD))
    result = sample_posterior(cfg, toy_task.prior, toy_task.model, toy_task.y)
    for record in result.traces[0]:
        assert record.omega == 0.5
        assert record.s * record.prior_norm_sq == pytest.approx(record.dot_prior_likelihood)
        assert record.dot_prior_posterior == pytest.approx(
            record.prior_norm_sq + 0.5 * record.dot_prior_likelihood
        )


def test_traces_can_be_skipped(toy_task):
    result = sample_posterior(
        _config(record_traces=False), toy_task.prior, toy_task.model, toy_task.y
    )
    assert result.traces == [[] for _ in range(6)]


@pytest.mark.parametrize(
    "kind", [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM, GuidanceNames.EXACT]
)
def test_every_guidance_kind_runs(toy_task, kind):
    cfg = _config(guidance=GuidanceMethod(kind, scale_param=0.5))
    result = sample_posterior(cfg, toy_task.prior, toy_task.model, toy_task.y)
    assert result.failed == []
    assert np.all(np.isfinite(result.samples_array()))


def test_image_samples_keep_shape():
    shape = (3, 3)
    prior = GmmPrior.isotropic([1.0], [np.full(9, 0.5)], [0.02])
    model = MeasurementModel(IdentityOperator(in_dim=9, out_dim=9, image_shape=shape), 0.1)
    result = sample_posterior(
        _config(chains=2, guidance=GuidanceMethod(GuidanceNames.PIGDM)),
        prior,
        model,
        Signal.from_image(np.full(shape, 0.5)),
    )
    assert all(sample.shape == shape for sample in result.samples)
    assert result.posterior_mean().shape == shape


def test_non_finite_chains_fail_individually(toy_task):
    def score(x, t):
        result = -np.array(x, dtype=np.float64)
        result[1:] = np.inf
        return result

    external = ExternalScoreModel(score, dim=2)
    cfg = _config(chains=3, chain_block_size=3, guidance=GuidanceMethod(GuidanceNames.DMPS))
    result = sample_posterior(cfg, external, toy_task.model, toy_task.y)
    assert result.succeeded == [0]
    assert result.failed == [1, 2]
    assert "non-finite" in result.errors[1]
    assert result.samples[1] is None
    assert len(result.traces[1]) == 1
    assert len(result.traces[0]) == 20


def test_module_errors_fail_every_affected_chain(toy_task):
    model = MeasurementModel(toy_task.model.operator, 0.0)
    result = sample_posterior(_config(), toy_task.prior, model, toy_task.y)
    assert result.succeeded == []
    assert all("noise_std" in error for error in result.errors)
    with pytest.raises(ContractViolation):
        result.posterior_mean()


def test_module_error_in_one_chain_spares_its_block(toy_task):
    cfg = _config(chains=6, chain_block_size=4, guidance=GuidanceMethod(GuidanceNames.DMPS))
    poisoned = Rng(cfg.seed).spawn("chain_2").standard_normal(2)

    def score(x, t):
        if t == cfg.schedule.T and any(np.array_equal(row, poisoned) for row in x):
            raise ContractViolation("Score model rejected its input.")
        return -np.array(x, dtype=np.float64)

    healthy_model = ExternalScoreModel(lambda x, t: -np.array(x, dtype=np.float64), dim=2)
    healthy = sample_posterior(cfg, healthy_model, toy_task.model, toy_task.y)
    result = sample_posterior(cfg, ExternalScoreModel(score, dim=2), toy_task.model, toy_task.y)
    assert result.failed == [2]
    assert result.succeeded == [0, 1, 3, 4, 5]
    assert "rejected" in result.errors[2]
    assert result.samples[2] is None
    assert result.traces[2] == []
    for chain in result.succeeded:
        assert np.allclose(
            result.samples[chain].data, healthy.samples[chain].data, rtol=0, atol=1e-12
        )
        assert len(result.traces[chain]) == cfg.schedule.T


def test_exact_guidance_needs_mixture(toy_task):
    external = ExternalScoreModel(lambda x, t: -x, dim=2)
    with pytest.raises(ContractViolation):
        sample_posterior(
            _config(guidance=GuidanceMethod(GuidanceNames.EXACT)), external, toy_task.model, toy_task.y
        )


def test_reference_samples(toy_task):
    samples = reference_samples(toy_task.prior, toy_task.model, toy_task.y, 50_000, 7)
    posterior = exact_posterior(toy_task.prior, toy_task.model, toy_task.y)
    assert samples.shape == (50_000, 2)
    assert np.allclose(samples.mean(axis=0), posterior.weights @ posterior.means, atol=0.03)
    assert np.array_equal(
        samples, reference_samples(toy_task.prior, toy_task.model, toy_task.y, 50_000, 7)
    )


def test_sweep_scale(toy_task):
    cfg = _config(chains=8, saip=SaipConfig(omega=3.0))
    frame = sweep_scale(cfg, toy_task.prior, toy_task.model, toy_task.y, [0.1, 1.0], projections=16)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert list(frame["omega"]) == [0.1, 0.1, 1.0, 1.0]
    assert list(frame["variant"]) == [RunVariants.BASELINE, RunVariants.SAIP] * 2
    assert np.all(frame["sw_distance"] >= 0)


def test_run_result_accessors():
    result = RunResult(
        samples=[Signal.vector([1.0]), None, Signal.vector([3.0])],
        traces=[[], [], []],
        errors=[None, "boom", None],
    )
    assert result.succeeded == [0, 2]
    assert result.failed == [1]
    assert result.posterior_mean().data[0] == 2.0


def test_config_is_frozen():
    cfg = _config()
    with pytest.raises(Exception):
        cfg.chains = 2
    assert replace(cfg, chains=2).chains == 2
