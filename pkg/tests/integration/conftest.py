from dataclasses import replace

import pytest

from saiplab.configuration import Keys, get_configuration
from saiplab.constants.metadata import GuidanceNames, TaskNames
from saiplab.diffusion import make_scaled_linear_schedule
from saiplab.entity_types import GuidanceMethod
from saiplab.saip import SaipConfig
from saiplab.sampler import SamplerConfig
from saiplab.tasks import build_sampler_config, build_task

SEED = 0
TOY_STEPS = 100
TOY_CHAINS = 2000
GUIDANCE_KINDS = [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM]


@pytest.fixture(scope="session")
def toy_sampler_config() -> SamplerConfig:
    return SamplerConfig(
        schedule=make_scaled_linear_schedule(TOY_STEPS),
        guidance=GuidanceMethod(GuidanceNames.DPS),
        saip=SaipConfig(),
        chains=TOY_CHAINS,
        seed=SEED,
        record_traces=False,
    )


@pytest.fixture
def with_guidance(toy_sampler_config):
    def _with_guidance(kind: str, **kwargs) -> SamplerConfig:
        return replace(toy_sampler_config, guidance=GuidanceMethod(kind), **kwargs)

    return _with_guidance


@pytest.fixture(scope="session")
def image_tasks():
    """Every image task at 16x16 with a desk-scale sampler, keyed by task name."""
    tasks = {}
    for name in [
        TaskNames.DENOISE,
        TaskNames.DEBLUR,
        TaskNames.INPAINT_RANDOM,
        TaskNames.INPAINT_BOX,
    ]:
        config = get_configuration(
            {
                Keys.SEED: SEED,
                Keys.TASK: {Keys.NAME: name, Keys.IMAGE_SIZE: 16},
                Keys.SAMPLER: {Keys.STEPS: 50, Keys.CHAINS: 2},
                Keys.GUIDANCE: {Keys.METHOD: GuidanceNames.PIGDM},
            }
        )
        tasks[name] = (build_task(config), build_sampler_config(config))
    return tasks
