from saiplab.configuration.entities import Keys
from saiplab.configuration.generator import get_configuration
