from pathlib import Path

import saiplab

BASE_DIR = Path(saiplab.__file__).resolve().parent
DATA_ROOT = BASE_DIR / "data"

RECIPES_ROOT = DATA_ROOT / "recipes"
CANONICAL_TOY_RECIPE = RECIPES_ROOT / "canonical_toy.yaml"
DENOISE_RECIPE = RECIPES_ROOT / "denoise_16.yaml"

OUTPUT_DIR_ENV_VAR = "SAIP_LAB_OUT"
