from typing import Any, Callable, Dict

import numpy as np
from layered_config_tree import ConfigurationKeyError, LayeredConfigTree
from loguru import logger

from saiplab.configuration.entities import Keys
from saiplab.constants.data_values import SSIM_WINDOW
from saiplab.constants.metadata import (
    PIGDM_MODES,
    PRESETS,
    SAIP_VARIANTS,
    TASK_KINDS,
    GuidanceNames,
    PigdmModes,
    TaskNames,
)
from saiplab.exceptions import ConfigurationError


def validate_overrides(overrides: Dict, default_config: LayeredConfigTree) -> None:
    """
    Validates the user-provided overrides. Confirms that all user-provided
    keys exist in the default configuration and that every value has a valid
    type and range.
    """
    if not isinstance(overrides, Dict):
        raise ConfigurationError("Invalid configuration type provided.") from None
    _validate_node(overrides, default_config, "")


def _validate_node(overrides: Dict, default_config: LayeredConfigTree, path: str) -> None:
    for key, value in overrides.items():
        field = f"{path}{key}"
        default_node = _get_default_config_node(default_config, key, path.rstrip(".") or "root")
        if isinstance(default_node, LayeredConfigTree):
            if not isinstance(value, Dict):
                raise ConfigurationError(
                    f"'{field}' must be a Dict. Provided {value} of type {type(value)}."
                )
            _validate_node(value, default_node, f"{field}.")
        else:
            validator = PARAMETER_VALIDATOR_MAP.get(field)
            if validator is not None:
                validator(value, field)


def _get_default_config_node(
    default_config: LayeredConfigTree, key: str, section: str
) -> Any:
    """
    Validate that the node the user is trying to add exists in the default
    configuration.
    """
    try:
        return default_config[key]
    except ConfigurationKeyError:
        error_message = f"Invalid configuration key '{key}' provided in section '{section}'. "
        valid_options_message = f"Valid keys are {[k for k in default_config]}."
        raise ConfigurationError(error_message + valid_options_message) from None


def _validate_choice(options) -> Callable[[Any, str], None]:
    def validate(value: Any, field: str) -> None:
        if value not in options:
            raise ConfigurationError(f"'{field}' must be one of {options}. Provided {value}.")

    return validate


def _validate_bool(value: Any, field: str) -> None:
    if not isinstance(value, bool):
        raise ConfigurationError(
            f"'{field}' must be true or false. Provided {value} of type {type(value)}."
        )


def _validate_number(value: Any, field: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (float, int)) or not np.isfinite(value):
        raise ConfigurationError(
            f"'{field}' must be a finite float or int. Provided {value} of type {type(value)}."
        )


def _validate_optional_number(value: Any, field: str) -> None:
    if value is not None:
        _validate_number(value, field)


def _validate_positive(value: Any, field: str) -> None:
    _validate_number(value, field)
    if value <= 0:
        raise ConfigurationError(f"'{field}' must be positive. Provided {value}.")


def _validate_nonnegative(value: Any, field: str) -> None:
    _validate_number(value, field)
    if value < 0:
        raise ConfigurationError(f"'{field}' must be nonnegative. Provided {value}.")


def _validate_probability(value: Any, field: str) -> None:
    _validate_number(value, field)
    if not (0 <= value <= 1):
        raise ConfigurationError(
            f"'{field}' must be between 0 and 1 (inclusive). Provided {value}."
        )


def _validate_count(value: Any, field: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigurationError(f"'{field}' must be a positive int. Provided {value}.")


def _validate_image_size(value: Any, field: str) -> None:
    _validate_count(value, field)
    if value < SSIM_WINDOW:
        raise ConfigurationError(
            f"'{field}' must be at least {SSIM_WINDOW} to fit one SSIM window. Provided {value}."
        )


def _validate_seed(value: Any, field: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigurationError(f"'{field}' must be a nonnegative int. Provided {value}.")


def _validate_blur_kernel(value: Any, field: str) -> None:
    _validate_count(value, field)
    if value % 2 == 0:
        raise ConfigurationError(f"'{field}' must be odd. Provided {value}.")


def _validate_box(value: Any, field: str) -> None:
    if value is None:
        return
    if not isinstance(value, list) or len(value) != 4:
        raise ConfigurationError(
            f"'{field}' must be a list [top, left, height, width]. Provided {value}."
        )
    for entry in value:
        if isinstance(entry, bool) or not isinstance(entry, int) or entry < 0:
            raise ConfigurationError(
                f"'{field}' entries must be nonnegative ints. Provided {value}."
            )


def _validate_s_clamp(value: Any, field: str) -> None:
    if value is None:
        return
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigurationError(f"'{field}' must be null or a list [low, high]. Provided {value}.")
    for entry in value:
        _validate_number(entry, field)
    if not value[0] <= 1 <= value[1]:
        raise ConfigurationError(f"'{field}' must contain 1. Provided {value}.")


def _validate_matrix(value: Any, field: str) -> None:
    if value is None:
        return
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigurationError(f"'{field}' must be a nested list of numbers.") from None
    if not np.all(np.isfinite(array)):
        raise ConfigurationError(f"'{field}' must only hold finite numbers.")


def _validate_optional_path(value: Any, field: str) -> None:
    if value is not None and not isinstance(value, str):
        raise ConfigurationError(f"'{field}' must be a path string. Provided {value}.")


PARAMETER_VALIDATOR_MAP: Dict[str, Callable[[Any, str], None]] = {
    Keys.SEED: _validate_seed,
    f"{Keys.TASK}.{Keys.NAME}": _validate_choice(TASK_KINDS),
    f"{Keys.TASK}.{Keys.PRESET}": _validate_choice(PRESETS),
    f"{Keys.TASK}.{Keys.IMAGE_SIZE}": _validate_image_size,
    f"{Keys.TASK}.{Keys.NOISE_STD}": _validate_nonnegative,
    f"{Keys.TASK}.{Keys.BLUR_KERNEL}": _validate_blur_kernel,
    f"{Keys.TASK}.{Keys.MISSING_FRACTION}": _validate_probability,
    f"{Keys.TASK}.{Keys.BOX}": _validate_box,
    f"{Keys.TASK}.{Keys.BOX_FRACTION}": _validate_probability,
    f"{Keys.TASK}.{Keys.PRIOR_COMPONENTS}": _validate_count,
    f"{Keys.TASK}.{Keys.PRIOR_VARIANCE}": _validate_positive,
    f"{Keys.TASK}.{Keys.GMM}.{Keys.WEIGHTS}": _validate_matrix,
    f"{Keys.TASK}.{Keys.GMM}.{Keys.MEANS}": _validate_matrix,
    f"{Keys.TASK}.{Keys.GMM}.{Keys.COVARIANCES}": _validate_matrix,
    f"{Keys.TASK}.{Keys.GMM}.{Keys.VARIANCES}": _validate_matrix,
    f"{Keys.TASK}.{Keys.OPERATOR}": _validate_matrix,
    f"{Keys.TASK}.{Keys.MEASUREMENT}": _validate_matrix,
    f"{Keys.SAMPLER}.{Keys.STEPS}": _validate_count,
    f"{Keys.SAMPLER}.{Keys.BETA_START}": _validate_probability,
    f"{Keys.SAMPLER}.{Keys.BETA_END}": _validate_probability,
    f"{Keys.SAMPLER}.{Keys.SCALE_TO_STEPS}": _validate_bool,
    f"{Keys.SAMPLER}.{Keys.CHAINS}": _validate_count,
    f"{Keys.SAMPLER}.{Keys.CHAIN_BLOCK_SIZE}": _validate_count,
    f"{Keys.SAMPLER}.{Keys.THREADS}": _validate_count,
    f"{Keys.SAMPLER}.{Keys.TRACK_MEMORY}": _validate_bool,
    f"{Keys.GUIDANCE}.{Keys.METHOD}": _validate_choice(
        [GuidanceNames.DPS, GuidanceNames.DMPS, GuidanceNames.PIGDM, GuidanceNames.EXACT]
    ),
    f"{Keys.GUIDANCE}.{Keys.SCALE}": _validate_positive,
    f"{Keys.GUIDANCE}.{Keys.PIGDM_R2_MODE}": _validate_choice(PIGDM_MODES),
    f"{Keys.GUIDANCE}.{Keys.NORMALIZE_BY_RESIDUAL}": _validate_bool,
    f"{Keys.SAIP}.{Keys.ENABLED}": _validate_bool,
    f"{Keys.SAIP}.{Keys.OMEGA}": _validate_optional_number,
    f"{Keys.SAIP}.{Keys.VARIANT}": _validate_choice(SAIP_VARIANTS),
    f"{Keys.SAIP}.{Keys.S_CLAMP}": _validate_s_clamp,
    f"{Keys.METRICS}.{Keys.PEAK}": _validate_positive,
    f"{Keys.METRICS}.{Keys.PROJECTIONS}": _validate_count,
    f"{Keys.METRICS}.{Keys.METRIC_SEED}": _validate_seed,
    f"{Keys.METRICS}.{Keys.REFERENCE_SAMPLES}": _validate_count,
    f"{Keys.IO}.{Keys.INPUT_IMAGE}": _validate_optional_path,
    f"{Keys.IO}.{Keys.OUTPUT_DIR}": _validate_optional_path,
    f"{Keys.IO}.{Keys.RECORD_TIMING}": _validate_bool,
}


def validate_configuration(configuration: LayeredConfigTree) -> None:
    """
    Cross-field checks on the merged configuration: schedule range, box inside
    the image, blur kernel no larger than the image, and a consistent GMM spec
    for the synthetic task.
    """
    task = configuration[Keys.TASK]
    sampler = configuration[Keys.SAMPLER]
    if not 0 < sampler[Keys.BETA_START] <= sampler[Keys.BETA_END] < 1:
        raise ConfigurationError(
            f"'{Keys.SAMPLER}.{Keys.BETA_START}' and '{Keys.SAMPLER}.{Keys.BETA_END}' must "
            f"satisfy 0 < beta_start <= beta_end < 1. Provided "
            f"({sampler[Keys.BETA_START]}, {sampler[Keys.BETA_END]})."
        )
    size = task[Keys.IMAGE_SIZE]
    if task[Keys.NAME] == TaskNames.DEBLUR and task[Keys.BLUR_KERNEL] > size:
        raise ConfigurationError(
            f"'{Keys.TASK}.{Keys.BLUR_KERNEL}' ({task[Keys.BLUR_KERNEL]}) exceeds the image "
            f"size ({size})."
        )
    box = task[Keys.BOX]
    if task[Keys.NAME] == TaskNames.INPAINT_BOX and box is not None:
        top, left, height, width = box
        if top + height > size or left + width > size:
            raise ConfigurationError(
                f"'{Keys.TASK}.{Keys.BOX}' {list(box)} does not lie inside the {size}x{size} image."
            )
    if task[Keys.NAME] == TaskNames.SYNTHETIC_GMM:
        _validate_gmm_spec(task)
    guidance = configuration[Keys.GUIDANCE]
    if (
        guidance[Keys.PIGDM_R2_MODE] == PigdmModes.EXACT_GAUSSIAN
        and task[Keys.NAME] != TaskNames.SYNTHETIC_GMM
    ):
        logger.warning(
            "The exact_gaussian r^2 mode is exact only for single-component Gaussian priors."
        )


def _validate_gmm_spec(task: LayeredConfigTree) -> None:
    field = f"{Keys.TASK}.{Keys.GMM}"
    gmm = task[Keys.GMM]
    covariances, variances = gmm[Keys.COVARIANCES], gmm[Keys.VARIANCES]
    if (covariances is None) == (variances is None):
        raise ConfigurationError(
            f"'{field}' must set exactly one of '{Keys.COVARIANCES}' and '{Keys.VARIANCES}' "
            "(set the other to null)."
        )
    weights = np.asarray(gmm[Keys.WEIGHTS], dtype=np.float64)
    means = np.atleast_2d(np.asarray(gmm[Keys.MEANS], dtype=np.float64))
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigurationError(
            f"'{field}.{Keys.WEIGHTS}' must be nonnegative and sum to 1. Provided {weights.tolist()}."
        )
    if means.shape[0] != weights.size:
        raise ConfigurationError(
            f"'{field}' has {weights.size} weights but {means.shape[0]} means."
        )
    expected = (weights.size, means.shape[1], means.shape[1])
    if covariances is not None and np.asarray(covariances, dtype=np.float64).shape != expected:
        raise ConfigurationError(f"'{field}.{Keys.COVARIANCES}' must have shape {expected}.")
    if variances is not None and np.asarray(variances, dtype=np.float64).shape != expected[:2]:
        raise ConfigurationError(f"'{field}.{Keys.VARIANCES}' must have shape {expected[:2]}.")
    operator = np.atleast_2d(np.asarray(task[Keys.OPERATOR], dtype=np.float64))
    if operator.shape[1] != means.shape[1]:
        raise ConfigurationError(
            f"'{Keys.TASK}.{Keys.OPERATOR}' has {operator.shape[1]} columns but the GMM "
            f"dimension is {means.shape[1]}."
        )
    measurement = task[Keys.MEASUREMENT]
    if measurement is not None and np.asarray(measurement).size != operator.shape[0]:
        raise ConfigurationError(
            f"'{Keys.TASK}.{Keys.MEASUREMENT}' must have {operator.shape[0]} entries."
        )
