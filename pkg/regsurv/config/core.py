from regsurv.config.error import ConfigError
from regsurv.property import PropertyLayer
from configparser import ConfigParser, Error as ConfigParserError
import os

import logging

logger = logging.getLogger(__name__)


class FileConfig(PropertyLayer):
    """
    INI configuration file. Sections only group keys for the reader; all keys share one namespace:

        [paths]
        deaths = registry/deaths.csv
        [cohort]
        window_start_year = 2007

    Values are coerced to the type of the matching default, unknown keys are rejected.
    Relative paths are resolved against the directory of the config file.
    """

    sections = ["paths", "cohort", "rates", "survival", "cox", "run"]
    pathKeys = ["deaths", "discharges", "population", "standard_population", "rules", "cohort", "output"]

    def __init__(self, file, defaults):
        super().__init__()
        if not os.path.isfile(file):
            raise ConfigError("config", "{file} doesn't exist".format(file=file))
        config = ConfigParser()
        try:
            config.read(file)
        except ConfigParserError as e:
            raise ConfigError("config", "cannot parse {file}: {error}".format(file=file, error=e))
        base = os.path.dirname(os.path.abspath(file))
        for section in config.sections():
            if section not in FileConfig.sections:
                logger.warning("ignoring unknown section [%s] in %s", section, file)
                continue
            for key, raw in config.items(section):
                if key not in defaults:
                    raise ConfigError(key, "unknown configuration key in section [{0}]".format(section))
                value = FileConfig.coerce(key, raw, defaults[key])
                if key in FileConfig.pathKeys and value and not os.path.isabs(value):
                    value = os.path.join(base, value)
                self[key] = value
        logger.debug("loaded %i settings from %s", len(self.keys()), file)

    @staticmethod
    def coerce(key, raw: str, default):
        raw = raw.strip()
        try:
            if isinstance(default, bool):
                if raw.lower() in ["1", "yes", "true", "on"]:
                    return True
                if raw.lower() in ["0", "no", "false", "off"]:
                    return False
                raise ValueError(raw)
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
        except ValueError:
            raise ConfigError(key, 'cannot convert "{0}" to {1}'.format(raw, type(default).__name__))
        return raw
