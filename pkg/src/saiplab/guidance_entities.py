from typing import NamedTuple

from saiplab import guidance_functions
from saiplab.constants.metadata import GuidanceNames
from saiplab.entity_types import GuidanceType


class __GuidanceTypes(NamedTuple):
    """Container for all likelihood-score approximators: dps, dmps, pigdm, exact.

    NOTE: the default scales defined here end up in the "baseline"
    LayeredConfigTree layer.
    """

    dps: GuidanceType = GuidanceType(
        GuidanceNames.DPS, guidance_functions.estimate_dps, default_scale=1.0
    )
    dmps: GuidanceType = GuidanceType(
        GuidanceNames.DMPS, guidance_functions.estimate_dmps, default_scale=1.0
    )
    pigdm: GuidanceType = GuidanceType(
        GuidanceNames.PIGDM, guidance_functions.estimate_pigdm, default_scale=1.0
    )
    exact: GuidanceType = GuidanceType(
        GuidanceNames.EXACT,
        guidance_functions.estimate_exact,
        default_scale=1.0,
        needs_oracle=True,
    )

    def get(self, name: str) -> GuidanceType:
        return getattr(self, name)


GUIDANCE_TYPES = __GuidanceTypes()
