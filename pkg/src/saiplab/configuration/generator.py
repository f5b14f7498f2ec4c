from pathlib import Path
from typing import Dict, Optional, Union

import yaml
from layered_config_tree import LayeredConfigTree

from saiplab.configuration.entities import Keys
from saiplab.configuration.validator import validate_configuration, validate_overrides
from saiplab.constants import data_values
from saiplab.constants.metadata import (
    GuidanceNames,
    PigdmModes,
    Presets,
    SaipVariants,
    TaskNames,
)
from saiplab.exceptions import ConfigurationError
from saiplab.guidance_entities import GUIDANCE_TYPES

_TOY_VARIANCE = data_values.CANONICAL_TOY_COVARIANCE_SCALE
CANONICAL_TOY_GMM = {
    Keys.WEIGHTS: data_values.CANONICAL_TOY_WEIGHTS,
    Keys.MEANS: data_values.CANONICAL_TOY_MEANS,
    Keys.COVARIANCES: [
        [[_TOY_VARIANCE, 0.0], [0.0, _TOY_VARIANCE]] for _ in data_values.CANONICAL_TOY_WEIGHTS
    ],
    Keys.VARIANCES: None,
}

# Every key with its package default
BASELINE_VALUES = {
    Keys.SEED: data_values.CANONICAL_TOY_SEED,
    Keys.TASK: {
        Keys.NAME: TaskNames.DENOISE,
        Keys.PRESET: Presets.STANDARD,
        Keys.IMAGE_SIZE: data_values.DEFAULT_IMAGE_SIZE,
        Keys.NOISE_STD: data_values.STANDARD_MEASUREMENT_NOISE,
        Keys.BLUR_KERNEL: data_values.DEFAULT_BLUR_KERNEL,
        Keys.MISSING_FRACTION: 0.0,
        Keys.BOX: None,
        Keys.BOX_FRACTION: 0.5,
        Keys.PRIOR_COMPONENTS: data_values.IMAGE_PRIOR_COMPONENTS,
        Keys.PRIOR_VARIANCE: data_values.IMAGE_PRIOR_VARIANCE,
        Keys.GMM: CANONICAL_TOY_GMM,
        Keys.OPERATOR: data_values.CANONICAL_TOY_OPERATOR,
        Keys.MEASUREMENT: None,
    },
    Keys.SAMPLER: {
        Keys.STEPS: 100,
        Keys.BETA_START: data_values.DEFAULT_BETA_START,
        Keys.BETA_END: data_values.DEFAULT_BETA_END,
        Keys.SCALE_TO_STEPS: True,
        Keys.CHAINS: 4,
        Keys.CHAIN_BLOCK_SIZE: 256,
        Keys.THREADS: 1,
        Keys.TRACK_MEMORY: False,
    },
    Keys.GUIDANCE: {
        Keys.METHOD: GuidanceNames.DPS,
        Keys.SCALE: GUIDANCE_TYPES.dps.default_scale,
        Keys.PIGDM_R2_MODE: PigdmModes.HEURISTIC,
        Keys.NORMALIZE_BY_RESIDUAL: True,
    },
    Keys.SAIP: {
        Keys.ENABLED: True,
        Keys.OMEGA: None,
        Keys.VARIANT: SaipVariants.EQ12_POSTERIOR,
        Keys.S_CLAMP: None,
    },
    Keys.METRICS: {
        Keys.PEAK: data_values.DEFAULT_PEAK,
        Keys.PROJECTIONS: data_values.DEFAULT_SW_PROJECTIONS,
        Keys.METRIC_SEED: data_values.DEFAULT_METRIC_SEED,
        Keys.REFERENCE_SAMPLES: 2000,
    },
    Keys.IO: {
        Keys.INPUT_IMAGE: None,
        Keys.OUTPUT_DIR: None,
        Keys.RECORD_TIMING: False,
    },
}

# Non-baseline defaults of each task kind; the preset values are layered on top
DEFAULT_TASK_VALUES = {
    TaskNames.SYNTHETIC_GMM: {
        Keys.TASK: {Keys.NOISE_STD: data_values.CANONICAL_TOY_NOISE_STD},
    },
}


def get_configuration(overrides: Optional[Union[Path, str, Dict]] = None) -> LayeredConfigTree:
    """
    Gets the run configuration LayeredConfigTree, optionally overridden by a
    user-provided YAML file or dictionary. A run manifest is accepted as well,
    in which case the configuration it embeds is used.

    :param overrides: A path to a YAML file or a dictionary of user overrides
    :return: a LayeredConfigTree object of the run configuration
    """
    overrides = load_overrides(overrides)
    task = overrides.get(Keys.TASK, {}) if isinstance(overrides, Dict) else {}
    task = task if isinstance(task, Dict) else {}
    configuration = _generate_configuration(
        task.get(Keys.NAME, BASELINE_VALUES[Keys.TASK][Keys.NAME]),
        task.get(Keys.PRESET, BASELINE_VALUES[Keys.TASK][Keys.PRESET]),
    )
    if overrides:
        add_overrides(configuration, overrides)
    validate_configuration(configuration)
    return configuration


def load_overrides(overrides: Optional[Union[Path, str, Dict]]) -> Dict:
    if overrides is None:
        return {}
    if isinstance(overrides, (Path, str)):
        try:
            with open(overrides, "r") as f:
                overrides = yaml.safe_load(f)
        except OSError as e:
            raise ConfigurationError(f"Could not read configuration file '{overrides}': {e}")
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            location = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigurationError(
                f"Invalid YAML in configuration file '{overrides}'{location}."
            ) from None
        overrides = {} if overrides is None else overrides
    if not isinstance(overrides, Dict):
        raise ConfigurationError("Invalid configuration type provided.")
    if Keys.MANIFEST_VERSION in overrides:
        overrides = overrides.get(Keys.CONFIG, {})
    return overrides


def _generate_configuration(task_name: str, preset: str) -> LayeredConfigTree:
    default_config_layers = [
        "baseline",
        "default",
        "user",
    ]
    configuration = LayeredConfigTree(layers=default_config_layers)
    configuration.update(BASELINE_VALUES, layer="baseline")
    # Unknown names are reported by the validator once the user layer is checked
    configuration.update(get_task_defaults(task_name, preset), layer="default")
    return configuration


def get_task_defaults(task_name: str, preset: str) -> Dict:
    task_defaults = dict(DEFAULT_TASK_VALUES.get(task_name, {}).get(Keys.TASK, {}))
    task_defaults.update(data_values.TASK_PRESET_VALUES.get(preset, {}).get(task_name, {}))
    return {Keys.TASK: task_defaults} if task_defaults else {}


def add_overrides(configuration: LayeredConfigTree, overrides: Dict) -> None:
    validate_overrides(overrides, configuration)
    configuration.update(overrides, layer="user")
