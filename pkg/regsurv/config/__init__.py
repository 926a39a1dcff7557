from regsurv.property import PropertyStack, PropertyLayer, PropertyValidator, PropertyValidationError
from regsurv.property.validators import (
    RangeValidator,
    ChoiceValidator,
    YearValidator,
    IntegerValidator,
    StringValidator,
    BoolValidator,
    LambdaValidator,
)
from regsurv.config.error import ConfigError
from regsurv.config.defaults import defaultConfig
from regsurv.config.core import FileConfig
import os

import logging

logger = logging.getLogger(__name__)


def _isRatio(value):
    if value == "auto":
        return True
    try:
        return float(value) > 0
    except (TypeError, ValueError):
        return False


class RunConfig(PropertyStack):
    """
    configuration of one command run: flag overrides (priority 0) over the config file (priority 1)
    over the shipped defaults (priority 2)
    """

    sourceNames = {0: "flag", 1: "file", 2: "default"}

    validators = {
        "deaths": StringValidator(),
        "discharges": StringValidator(),
        "population": StringValidator(),
        "standard_population": StringValidator(),
        "rules": StringValidator(),
        "cohort": StringValidator(),
        "output": StringValidator(),
        "window_start_year": YearValidator(),
        "window_end_year": YearValidator(),
        "washout_start_year": YearValidator(),
        "seed": RangeValidator(0, 2 ** 64 - 1),
        "missing_id_scenario": ChoiceValidator("drop", "worst_case", "likely"),
        "discharge_ratio": LambdaValidator(_isRatio),
        "by": ChoiceValidator("year", "region", "insurer", "age_band"),
        "adjust": BoolValidator(),
        "extrapolate": BoolValidator(),
        "horizon": RangeValidator(1, 600),
        "strata": ChoiceValidator("all", "insurer", "segment", "metropolitan", "region"),
        "ties": ChoiceValidator("efron", "breslow"),
        "p_threshold": RangeValidator(0, 1, exclusiveMinimum=True),
        "tolerance": RangeValidator(0, None, exclusiveMinimum=True),
        "max_iter": RangeValidator(1, 10000),
        "selection_mode": ChoiceValidator("best", "first"),
        "workers": RangeValidator(1, 256),
    }

    def __init__(self, configFile=None, overrides: dict = None):
        super().__init__()
        flags = {k: v for k, v in (overrides or {}).items() if v is not None}
        for key in flags:
            if key not in defaultConfig:
                raise ConfigError(key, "unknown configuration key")
        try:
            self.addLayer(0, PropertyValidator(PropertyLayer(**flags), RunConfig.validators))
            if configFile is not None:
                self.addLayer(1, PropertyValidator(FileConfig(configFile, defaultConfig), RunConfig.validators))
        except PropertyValidationError as e:
            raise ConfigError(e.key, str(e))
        self.addLayer(2, defaultConfig)
        for key in ["seed", "horizon", "max_iter", "workers"]:
            if not IntegerValidator().isValid(self[key]):
                raise ConfigError(key, "must be an integer")
        if not self["washout_start_year"] < self["window_start_year"] <= self["window_end_year"]:
            raise ConfigError(
                "window_start_year",
                "expected washout_start_year < window_start_year <= window_end_year, got {0} / {1} / {2}".format(
                    self["washout_start_year"], self["window_start_year"], self["window_end_year"]
                ),
            )

    def requirePaths(self, *keys):
        for key in keys:
            path = self[key]
            if not path:
                raise ConfigError(key, "no file configured")
            if not os.path.isfile(path):
                raise ConfigError(key, "{path} doesn't exist".format(path=path))

    def optionalPath(self, key):
        path = self[key]
        if not path:
            return None
        if not os.path.isfile(path):
            raise ConfigError(key, "{path} doesn't exist".format(path=path))
        return path

    def getOutputDirectory(self):
        directory = self["output"]
        if os.path.exists(directory) and not os.path.isdir(directory):
            raise ConfigError("output", "{dir} is not a directory".format(dir=directory))
        os.makedirs(directory, exist_ok=True)
        if not os.access(directory, os.W_OK):
            raise ConfigError("output", "{dir} is not writable".format(dir=directory))
        return directory

    def getCohortFile(self):
        if self["cohort"]:
            return self["cohort"]
        return os.path.join(self["output"], "cohort.csv")

    def getAccountingFile(self):
        return os.path.join(os.path.dirname(self.getCohortFile()) or ".", "accounting.json")

    def describe(self):
        """
        effective value and origin of every setting
        """
        values = self.__dict__()
        return {k: {"value": values[k], "source": RunConfig.sourceNames[self.sourceOf(k)]} for k in sorted(values)}

    def getDischargeRatio(self):
        ratio = self["discharge_ratio"]
        if ratio == "auto":
            return None
        return float(ratio)

    def cohortConfig(self):
        # inline import due to circular dependencies
        from regsurv.cohort import CohortConfig, MissingIdScenario

        return CohortConfig(
            windowStartYear=self["window_start_year"],
            windowEndYear=self["window_end_year"],
            washoutStartYear=self["washout_start_year"],
            imputationSeed=self["seed"],
            missingIdScenario=MissingIdScenario(self["missing_id_scenario"]),
            dischargeRatio=self.getDischargeRatio(),
        )
