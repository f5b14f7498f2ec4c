"""
=========
   Tasks
=========

Builds a concrete inverse problem from a run configuration: the prior, the
measurement model, the ground truth and its measurement.

Image tasks work on desk-scale synthetic piecewise-constant images. Their prior
is a Gaussian mixture whose components are centred on seeded template images,
plus a broad background component, so every score stays analytic.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from layered_config_tree import LayeredConfigTree
from loguru import logger

from saiplab.configuration import Keys, get_configuration
from saiplab.constants import data_values
from saiplab.constants.metadata import MaskModes, TaskNames
from saiplab.diffusion import NoiseSchedule, make_linear_schedule, make_scaled_linear_schedule
from saiplab.entity_types import GuidanceMethod
from saiplab.exceptions import ConfigurationError
from saiplab.gmm import GmmPrior, gmm_sample_array, load_gmm
from saiplab.image_io import read_pgm
from saiplab.numerics import Rng, Signal
from saiplab.operators import (
    IdentityOperator,
    MaskOperator,
    MaskSpec,
    MatrixOperator,
    MeasurementModel,
    UniformBlurOperator,
    centered_box,
    make_mask,
    measure,
)
from saiplab.saip import SaipConfig
from saiplab.sampler import SamplerConfig

ConfigLike = Union[LayeredConfigTree, Dict]


@dataclass(frozen=True)
class TaskInstance:
    name: str
    prior: GmmPrior
    model: MeasurementModel
    ground_truth: Signal
    y: Signal
    mask: Optional[MaskOperator] = None

    @property
    def image_shape(self) -> Optional[Tuple[int, int]]:
        return self.model.operator.image_shape


def synthetic_image(
    shape: Tuple[int, int],
    rng: Rng,
    n_rectangles: int = data_values.SYNTHETIC_IMAGE_RECTANGLES,
) -> np.ndarray:
    """
    Piecewise-constant image in ``[0, 1]``: a flat background overlaid with
    ``n_rectangles`` axis-aligned rectangles of random position, size and level.
    """
    height, width = shape
    image = np.full(shape, 0.3 * rng.uniform())
    for _ in range(n_rectangles):
        top, left = rng.generator.integers(0, height), rng.generator.integers(0, width)
        rect_height = rng.generator.integers(1, max(2, height // 2) + 1)
        rect_width = rng.generator.integers(1, max(2, width // 2) + 1)
        image[top : top + rect_height, left : left + rect_width] = rng.uniform()
    return image


def image_prior(
    shape: Tuple[int, int],
    rng: Rng,
    n_templates: int = data_values.IMAGE_PRIOR_COMPONENTS,
    variance: float = data_values.IMAGE_PRIOR_VARIANCE,
    template: Optional[np.ndarray] = None,
) -> GmmPrior:
    """
    Equal-weight mixture of isotropic Gaussians around ``n_templates`` synthetic
    images and a mid-grey background component of larger variance. A user
    ``template`` replaces the first synthetic one.
    """
    n_pixels = shape[0] * shape[1]
    means = [synthetic_image(shape, rng).reshape(-1) for _ in range(n_templates)]
    if template is not None:
        means[0] = np.asarray(template, dtype=np.float64).reshape(-1)
    means.append(np.full(n_pixels, 0.5))
    variances = [variance] * n_templates + [data_values.IMAGE_PRIOR_BACKGROUND_VARIANCE]
    weights = np.full(n_templates + 1, 1.0 / (n_templates + 1))
    return GmmPrior.isotropic(weights, means, variances)


def canonical_toy_prior() -> GmmPrior:
    """The fixed 3-component 2D mixture used by the acceptance suite."""
    scale = data_values.CANONICAL_TOY_COVARIANCE_SCALE
    return GmmPrior(
        data_values.CANONICAL_TOY_WEIGHTS,
        data_values.CANONICAL_TOY_MEANS,
        [scale * np.eye(2) for _ in data_values.CANONICAL_TOY_WEIGHTS],
    )


def canonical_toy_model() -> MeasurementModel:
    return MeasurementModel(
        MatrixOperator.from_matrix(data_values.CANONICAL_TOY_OPERATOR),
        data_values.CANONICAL_TOY_NOISE_STD,
    )


def canonical_toy(seed: int = data_values.CANONICAL_TOY_SEED) -> TaskInstance:
    """The canonical toy with its ground truth and measurement drawn from ``seed``."""
    return build_task(
        get_configuration({Keys.SEED: seed, Keys.TASK: {Keys.NAME: TaskNames.SYNTHETIC_GMM}})
    )


def _section(config: ConfigLike, key: str) -> Dict:
    section = config[key]
    return section.to_dict() if isinstance(section, LayeredConfigTree) else section


def _image_operator(task: Dict, shape: Tuple[int, int], rng: Rng):
    n = shape[0] * shape[1]
    name = task[Keys.NAME]
    if name == TaskNames.DENOISE:
        return IdentityOperator(in_dim=n, out_dim=n, image_shape=shape)
    if name == TaskNames.DEBLUR:
        return UniformBlurOperator(
            in_dim=n, out_dim=n, image_shape=shape, kernel_size=task[Keys.BLUR_KERNEL]
        )
    if name == TaskNames.INPAINT_RANDOM:
        spec = MaskSpec(MaskModes.RANDOM, missing_fraction=task[Keys.MISSING_FRACTION])
        return make_mask(spec, shape, rng.spawn("mask"))
    box = task[Keys.BOX]
    box = tuple(box) if box is not None else centered_box(shape, task[Keys.BOX_FRACTION])
    return make_mask(MaskSpec(MaskModes.BOX, box=box), shape)


def _load_template(path: Optional[str], shape: Tuple[int, int]) -> Optional[np.ndarray]:
    if path is None:
        return None
    image = read_pgm(Path(path))
    if image.shape != shape:
        raise ConfigurationError(
            f"'{Keys.IO}.{Keys.INPUT_IMAGE}' has shape {image.shape} but "
            f"'{Keys.TASK}.{Keys.IMAGE_SIZE}' asks for {shape}."
        )
    return image.as_image()


def build_task(config: ConfigLike) -> TaskInstance:
    """
    Instantiates the configured task. All randomness derives from the top-level
    seed through the keyed streams ``mask``, ``image_prior``, ``ground_truth``
    and ``measurement``.

    :param config: resolved configuration (LayeredConfigTree or plain dict)
    :return: the task instance
    """
    task = _section(config, Keys.TASK)
    rng = Rng(config[Keys.SEED])
    name = task[Keys.NAME]
    if name == TaskNames.SYNTHETIC_GMM:
        prior = load_gmm(task[Keys.GMM])
        model = MeasurementModel(
            MatrixOperator.from_matrix(task[Keys.OPERATOR]), task[Keys.NOISE_STD]
        )
        ground_truth = Signal(gmm_sample_array(prior, rng.spawn("ground_truth"), 1)[0])
        if task.get(Keys.MEASUREMENT) is not None:
            y = Signal.vector(task[Keys.MEASUREMENT])
        else:
            y = measure(model, ground_truth, rng.spawn("measurement"))
        logger.debug(f"Synthetic GMM task with {prior.n_components} components in {prior.dim}D.")
        return TaskInstance(name, prior, model, ground_truth, y)

    size = task[Keys.IMAGE_SIZE]
    shape = (size, size)
    io = _section(config, Keys.IO)
    template = _load_template(io.get(Keys.INPUT_IMAGE), shape)
    prior = image_prior(
        shape,
        rng.spawn("image_prior"),
        n_templates=task[Keys.PRIOR_COMPONENTS],
        variance=task[Keys.PRIOR_VARIANCE],
        template=template,
    )
    if template is not None:
        ground_truth = Signal.from_image(template)
    else:
        draw = gmm_sample_array(prior, rng.spawn("ground_truth"), 1)[0]
        ground_truth = Signal(np.clip(draw, 0.0, 1.0), shape=shape)
    operator = _image_operator(task, shape, rng)
    model = MeasurementModel(operator, task[Keys.NOISE_STD])
    y = measure(model, ground_truth, rng.spawn("measurement"))
    mask = operator if isinstance(operator, MaskOperator) else None
    logger.debug(
        f"{name} task on a {size}x{size} image with noise_std={task[Keys.NOISE_STD]}, "
        f"{operator.out_dim} measurements."
    )
    return TaskInstance(name, prior, model, ground_truth, y, mask)


def build_schedule(config: ConfigLike) -> NoiseSchedule:
    sampler = _section(config, Keys.SAMPLER)
    if sampler[Keys.SCALE_TO_STEPS]:
        return make_scaled_linear_schedule(
            sampler[Keys.STEPS], sampler[Keys.BETA_START], sampler[Keys.BETA_END]
        )
    return make_linear_schedule(
        sampler[Keys.STEPS], sampler[Keys.BETA_START], sampler[Keys.BETA_END]
    )


def build_guidance(config: ConfigLike) -> GuidanceMethod:
    guidance = _section(config, Keys.GUIDANCE)
    return GuidanceMethod(
        kind=guidance[Keys.METHOD],
        scale_param=float(guidance[Keys.SCALE]),
        pigdm_r2_mode=guidance[Keys.PIGDM_R2_MODE],
        normalize_by_residual=guidance[Keys.NORMALIZE_BY_RESIDUAL],
    )


def build_saip(config: ConfigLike) -> SaipConfig:
    saip = _section(config, Keys.SAIP)
    clamp = saip[Keys.S_CLAMP]
    return SaipConfig(
        enabled=saip[Keys.ENABLED],
        omega=None if saip[Keys.OMEGA] is None else float(saip[Keys.OMEGA]),
        variant=saip[Keys.VARIANT],
        s_clamp=None if clamp is None else tuple(clamp),
    )


def build_sampler_config(config: ConfigLike, show_progress: bool = False) -> SamplerConfig:
    sampler = _section(config, Keys.SAMPLER)
    return SamplerConfig(
        schedule=build_schedule(config),
        guidance=build_guidance(config),
        saip=build_saip(config),
        chains=sampler[Keys.CHAINS],
        seed=config[Keys.SEED],
        chain_block_size=sampler[Keys.CHAIN_BLOCK_SIZE],
        threads=sampler[Keys.THREADS],
        track_memory=sampler[Keys.TRACK_MEMORY],
        show_progress=show_progress,
    )
