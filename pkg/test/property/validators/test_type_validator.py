from unittest import TestCase
from unittest.mock import Mock
from regsurv.property.validators import StringValidator, IntegerValidator, NumberValidator, BoolValidator, LambdaValidator


class TypeValidatorTest(TestCase):
    def testStrings(self):
        validator = StringValidator()
        self.assertTrue(validator.isValid("registry/deaths.csv"))
        self.assertTrue(validator.isValid(""))
        self.assertFalse(validator.isValid(2007))
        self.assertFalse(validator.isValid(None))

    def testIntegers(self):
        validator = IntegerValidator()
        self.assertTrue(validator.isValid(60))
        self.assertTrue(validator.isValid(-1))
        self.assertFalse(validator.isValid(60.0))
        self.assertFalse(validator.isValid("60"))

    def testNumbers(self):
        validator = NumberValidator()
        self.assertTrue(validator.isValid(50))
        self.assertTrue(validator.isValid(1e-8))
        self.assertFalse(validator.isValid("1e-8"))
        self.assertFalse(validator.isValid(object()))

    def testBooleansAreNotNumbers(self):
        self.assertFalse(IntegerValidator().isValid(True))
        self.assertFalse(NumberValidator().isValid(False))
        validator = BoolValidator()
        self.assertTrue(validator.isValid(True))
        self.assertTrue(validator.isValid(False))
        self.assertFalse(validator.isValid(1))
        self.assertFalse(validator.isValid("yes"))


class LambdaValidatorTest(TestCase):
    def testPassesValue(self):
        mock = Mock()
        LambdaValidator(mock.check).isValid("auto")
        mock.check.assert_called_once_with("auto")

    def testResultIsBoolean(self):
        validator = LambdaValidator(lambda v: v == "auto" or v)
        self.assertIs(validator.isValid("auto"), True)
        self.assertIs(validator.isValid(2.5), True)
        self.assertIs(validator.isValid(0), False)
