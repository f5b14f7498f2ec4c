from saiplab.__about__ import (
    __author__,
    __copyright__,
    __email__,
    __license__,
    __summary__,
    __title__,
    __uri__,
)
from saiplab._version import __version__
from saiplab.configuration.interface import get_config
from saiplab.diffusion import make_linear_schedule, make_scaled_linear_schedule
from saiplab.entity_types import GuidanceMethod
from saiplab.gmm import GmmPrior, exact_posterior, load_gmm
from saiplab.numerics import Rng, Signal
from saiplab.operators import MeasurementModel
from saiplab.saip import SaipConfig
from saiplab.sampler import RunResult, SamplerConfig, sample_posterior, sweep_scale
from saiplab.tasks import build_task, canonical_toy
