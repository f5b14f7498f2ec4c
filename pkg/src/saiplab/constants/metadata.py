class TaskNames:
    """Container for task kinds"""

    DENOISE = "denoise"
    DEBLUR = "deblur"
    INPAINT_RANDOM = "inpaint_random"
    INPAINT_BOX = "inpaint_box"
    SYNTHETIC_GMM = "synthetic_gmm"


IMAGE_TASKS = [
    TaskNames.DENOISE,
    TaskNames.DEBLUR,
    TaskNames.INPAINT_RANDOM,
    TaskNames.INPAINT_BOX,
]
TASK_KINDS = IMAGE_TASKS + [TaskNames.SYNTHETIC_GMM]


class Presets:
    """Container for task severity presets"""

    STANDARD = "standard"
    INTENSIFIED = "intensified"
    HIGH_NOISE = "high_noise"


PRESETS = [Presets.STANDARD, Presets.INTENSIFIED, Presets.HIGH_NOISE]


class GuidanceNames:
    """Container for likelihood-score approximator names"""

    DPS = "dps"
    DMPS = "dmps"
    PIGDM = "pigdm"
    EXACT = "exact"


class PigdmModes:
    HEURISTIC = "heuristic"
    EXACT_GAUSSIAN = "exact_gaussian"


PIGDM_MODES = [PigdmModes.HEURISTIC, PigdmModes.EXACT_GAUSSIAN]


class SaipVariants:
    """Container for the two closed forms of the adaptive scale"""

    EQ12_POSTERIOR = "eq12_posterior"
    EQ11_LIKELIHOOD = "eq11_likelihood"


SAIP_VARIANTS = [SaipVariants.EQ12_POSTERIOR, SaipVariants.EQ11_LIKELIHOOD]


class OperatorKinds:
    IDENTITY = "identity"
    MASK = "mask"
    UNIFORM_BLUR = "uniform_blur"


class MaskModes:
    RANDOM = "random"
    BOX = "box"


class RunVariants:
    """Names of the sampler variants written to metrics.csv and sweep.csv"""

    BASELINE = "baseline"
    SAIP = "saip"


TRACE_COLUMNS = [
    "t",
    "s",
    "omega",
    "prior_norm_sq",
    "dot_prior_likelihood",
    "dot_prior_posterior",
    "offset_norm",
]

METRICS_COLUMNS = [
    "run_id",
    "task",
    "method",
    "saip_enabled",
    "saip_variant",
    "omega",
    "seed",
    "psnr_db",
    "ssim",
    "sw_distance",
    "wall_time_s",
    "extra_memory_bytes",
]

SWEEP_COLUMNS = ["omega", "variant", "sw_distance", "wall_time_s"]

VERIFY_COLUMNS = ["check", "observed", "tolerance", "passed"]

MANIFEST_VERSION = 1
