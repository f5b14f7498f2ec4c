__all__ = [
    "__title__",
    "__summary__",
    "__uri__",
    "__author__",
    "__email__",
    "__license__",
    "__copyright__",
]

__title__ = "saiplab"
__summary__ = "saiplab samples posteriors of linear inverse problems with diffusion models, plugging a closed-form adaptive guidance scale into DPS, DMPS and piGDM and checking every score against exact Gaussian-mixture oracles."
__uri__ = "https://github.com/saiplab/saiplab"

__author__ = "The saiplab developers"
__email__ = "saiplab.dev@gmail.com"

__license__ = "BSD-3-Clause"
__copyright__ = f"Copyright 2025 {__author__}"
