class Keys:
    """Container for all section and key names used in the configuration file"""

    SEED = "seed"

    TASK = "task"  # task: {name: ..., preset: ..., noise_std: ...}
    NAME = "name"
    PRESET = "preset"
    IMAGE_SIZE = "image_size"
    NOISE_STD = "noise_std"
    BLUR_KERNEL = "blur_kernel"
    MISSING_FRACTION = "missing_fraction"
    BOX = "box"
    BOX_FRACTION = "box_fraction"
    PRIOR_COMPONENTS = "prior_components"
    PRIOR_VARIANCE = "prior_variance"
    GMM = "gmm"  # task: gmm: {weights: ..., means: ..., covariances | variances: ...}
    WEIGHTS = "weights"
    MEANS = "means"
    COVARIANCES = "covariances"
    VARIANCES = "variances"
    OPERATOR = "operator"
    MEASUREMENT = "measurement"

    SAMPLER = "sampler"
    STEPS = "steps"
    BETA_START = "beta_start"
    BETA_END = "beta_end"
    SCALE_TO_STEPS = "scale_to_steps"
    CHAINS = "chains"
    CHAIN_BLOCK_SIZE = "chain_block_size"
    THREADS = "threads"
    TRACK_MEMORY = "track_memory"

    GUIDANCE = "guidance"
    METHOD = "method"
    SCALE = "scale"
    PIGDM_R2_MODE = "pigdm_r2_mode"
    NORMALIZE_BY_RESIDUAL = "normalize_by_residual"

    SAIP = "saip"
    ENABLED = "enabled"
    OMEGA = "omega"
    VARIANT = "variant"
    S_CLAMP = "s_clamp"

    METRICS = "metrics"
    PEAK = "peak"
    PROJECTIONS = "projections"
    METRIC_SEED = "metric_seed"
    REFERENCE_SAMPLES = "reference_samples"

    IO = "io"
    INPUT_IMAGE = "input_image"
    OUTPUT_DIR = "output_dir"
    RECORD_TIMING = "record_timing"

    # Top-level keys of a run manifest
    MANIFEST_VERSION = "manifest_version"
    CONFIG = "config"
