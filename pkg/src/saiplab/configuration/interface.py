from pathlib import Path
from typing import Dict, Union

from saiplab.configuration.generator import get_configuration


def get_config(overrides: Union[Path, str, Dict] = None) -> Dict:
    """
    Function that returns the saiplab run configuration containing all
    default values. To get the default guidance method:

    .. code-block:: pycon

        >>> import saiplab
        >>> saiplab.get_config()['guidance']['method']
        'dps'

    To view the task section after choosing the canonical 2D toy problem:

    .. code-block:: pycon

        >>> saiplab.get_config({'task': {'name': 'synthetic_gmm'}})['task']['noise_std']
        0.3

    :param overrides:

        An optional set of overrides to the default configuration. Can
        be a (nested) Python dictionary, a path to a YAML recipe with the
        same nested structure, or a path to a run manifest, in which case
        the configuration recorded in the manifest is used. It is not
        necessary to provide a complete configuration; any parameters not
        specified in `overrides` are filled in with the defaults of the
        chosen task and preset.

    :return:

        A complete configuration dictionary.

    :raises ConfigurationError:

        An invalid configuration is passed with `overrides`.

    """
    return get_configuration(overrides).to_dict()
