from abc import ABC, abstractmethod


class ValidatorException(Exception):
    pass


class Validator(ABC):
    @staticmethod
    def of(x):
        if isinstance(x, Validator):
            return x
        if callable(x):
            return LambdaValidator(x)
        if x in validator_types:
            return validator_types[x]()
        raise ValidatorException("Cannot create validator from {0}".format(x))

    @abstractmethod
    def isValid(self, value):
        pass


class LambdaValidator(Validator):
    def __init__(self, c):
        self.callable = c

    def isValid(self, value):
        return bool(self.callable(value))


class TypeValidator(Validator):
    def __init__(self, *types):
        self.types = types

    def isValid(self, value):
        # bool is an int subclass, but never a valid number here
        if isinstance(value, bool) and bool not in self.types:
            return False
        return isinstance(value, self.types)


class IntegerValidator(TypeValidator):
    def __init__(self):
        super().__init__(int)


class NumberValidator(TypeValidator):
    def __init__(self):
        super().__init__(int, float)


class StringValidator(TypeValidator):
    def __init__(self):
        super().__init__(str)


class BoolValidator(TypeValidator):
    def __init__(self):
        super().__init__(bool)


class RangeValidator(NumberValidator):
    """
    numbers within [minimum, maximum]; either bound may be None. exclusive bounds are opt-in.
    """

    def __init__(self, minimum=None, maximum=None, exclusiveMinimum=False):
        super().__init__()
        self.minimum = minimum
        self.maximum = maximum
        self.exclusiveMinimum = exclusiveMinimum

    def isValid(self, value):
        if not super().isValid(value):
            return False
        if self.minimum is not None:
            if value < self.minimum or (self.exclusiveMinimum and value == self.minimum):
                return False
        if self.maximum is not None and value > self.maximum:
            return False
        return True


class ProbabilityValidator(RangeValidator):
    def __init__(self):
        super().__init__(0, 1)


class YearValidator(RangeValidator):
    def __init__(self):
        super().__init__(1900, 2100)

    def isValid(self, value):
        return isinstance(value, int) and super().isValid(value)


class ChoiceValidator(Validator):
    def __init__(self, *choices):
        self.choices = choices

    def isValid(self, value):
        return value in self.choices


validator_types = {
    "string": StringValidator,
    "str": StringValidator,
    "integer": IntegerValidator,
    "int": IntegerValidator,
    "number": NumberValidator,
    "num": NumberValidator,
    "bool": BoolValidator,
    "probability": ProbabilityValidator,
    "year": YearValidator,
}
