from typing import Dict

from saiplab.constants.metadata import Presets, TaskNames

# Schedule endpoints of the standard 1000-step DDPM
DEFAULT_NUM_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
REFERENCE_NUM_STEPS = 1000
ALPHA_BAR_RTOL = 1e-9

# Numerical floors
SCORE_NORM_SQ_FLOOR = 1e-300
LOG_RESPONSIBILITY_FLOOR = -700.0
RESIDUAL_NORM_FLOOR = 1e-12
FINITE_DIFFERENCE_STEP = 1e-4

DEFAULT_DENSE_LIMIT = 4096 * 4096

# Metric conventions
PSNR_CAP_DB = 99.0
DEFAULT_PEAK = 1.0
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_SW_PROJECTIONS = 128
DEFAULT_METRIC_SEED = 8675309

# Canonical 2D toy problem used by the acceptance suite
CANONICAL_TOY_WEIGHTS = [0.5, 0.3, 0.2]
CANONICAL_TOY_MEANS = [[-2.0, -2.0], [2.0, 1.0], [0.0, 3.0]]
CANONICAL_TOY_COVARIANCE_SCALE = 0.5
CANONICAL_TOY_OPERATOR = [[1.0, 0.0]]
CANONICAL_TOY_NOISE_STD = 0.3
CANONICAL_TOY_SEED = 20250917

# Image prior built from synthetic piecewise-constant templates
DEFAULT_IMAGE_SIZE = 16
IMAGE_PRIOR_COMPONENTS = 3
IMAGE_PRIOR_VARIANCE = 0.01
IMAGE_PRIOR_BACKGROUND_VARIANCE = 0.05
SYNTHETIC_IMAGE_RECTANGLES = 4

# Task parameters, keyed by preset. Box sides are fractions of the image side,
# matching 128/256 (standard) and 191/256 (intensified) on 256x256 images.
STANDARD_MEASUREMENT_NOISE = 0.05
DEFAULT_BLUR_KERNEL = 9
DESK_BLUR_KERNEL = 3

TASK_PRESET_VALUES: Dict[str, Dict[str, Dict]] = {
    Presets.STANDARD: {
        TaskNames.DENOISE: {"noise_std": 0.5},
        TaskNames.DEBLUR: {"noise_std": STANDARD_MEASUREMENT_NOISE},
        TaskNames.INPAINT_RANDOM: {
            "noise_std": STANDARD_MEASUREMENT_NOISE,
            "missing_fraction": 0.9,
        },
        TaskNames.INPAINT_BOX: {
            "noise_std": STANDARD_MEASUREMENT_NOISE,
            "box_fraction": 128 / 256,
        },
    },
    Presets.INTENSIFIED: {
        TaskNames.DENOISE: {"noise_std": 0.9},
        TaskNames.DEBLUR: {"noise_std": STANDARD_MEASUREMENT_NOISE},
        TaskNames.INPAINT_RANDOM: {
            "noise_std": STANDARD_MEASUREMENT_NOISE,
            "missing_fraction": 0.99,
        },
        TaskNames.INPAINT_BOX: {
            "noise_std": STANDARD_MEASUREMENT_NOISE,
            "box_fraction": 191 / 256,
        },
    },
    Presets.HIGH_NOISE: {
        TaskNames.DENOISE: {"noise_std": 0.9},
        TaskNames.DEBLUR: {"noise_std": 0.5},
        TaskNames.INPAINT_RANDOM: {"noise_std": 0.5, "missing_fraction": 0.9},
        TaskNames.INPAINT_BOX: {"noise_std": 0.5, "box_fraction": 128 / 256},
    },
}

# Guidance strengths of the default scale sweep
DEFAULT_SWEEP_OMEGAS = [0.03, 0.1, 0.3, 1.0, 3.0, 10.0]
DEFAULT_OUTPUT_DIR = "saiplab_output"
SPARKLINE_WIDTH = 60
