from unittest import TestCase
from regsurv.property import PropertyReadOnly, PropertyWriteError, PropertyValidationError
from regsurv.config import RunConfig
from regsurv.config.defaults import defaultConfig


class DefaultLayerTest(TestCase):
    def testShippedDefaultsAreReadOnly(self):
        self.assertIsInstance(defaultConfig, PropertyReadOnly)
        with self.assertRaises(PropertyWriteError):
            defaultConfig["seed"] = 1
        with self.assertRaises(PropertyWriteError):
            defaultConfig["colour"] = "blue"
        self.assertEqual(defaultConfig["seed"], 20070101)
        self.assertNotIn("colour", defaultConfig)

    def testRunWritesGoToTheFlagLayer(self):
        config = RunConfig()
        self.assertEqual(config.sourceOf("ties"), 2)
        config["ties"] = "breslow"
        self.assertEqual(config["ties"], "breslow")
        self.assertEqual(config.sourceOf("ties"), 0)
        self.assertEqual(defaultConfig["ties"], "efron")
        self.assertEqual(RunConfig()["ties"], "efron")

    def testRunWritesAreValidated(self):
        config = RunConfig()
        with self.assertRaises(PropertyValidationError):
            config["ties"] = "exact"
        with self.assertRaises(PropertyValidationError):
            config["window_start_year"] = "2007"
        self.assertEqual(config["ties"], "efron")
