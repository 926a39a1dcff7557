from abc import ABC, abstractmethod
from regsurv.property.validators import Validator
import logging

logger = logging.getLogger(__name__)


class PropertyError(Exception):
    pass


class PropertyManager(ABC):
    @abstractmethod
    def __getitem__(self, item):
        pass

    @abstractmethod
    def __setitem__(self, key, value):
        pass

    @abstractmethod
    def __contains__(self, item):
        pass

    @abstractmethod
    def __dict__(self):
        pass

    @abstractmethod
    def keys(self):
        pass

    def readonly(self):
        return PropertyReadOnly(self)


class PropertyLayer(PropertyManager):
    def __init__(self, **kwargs):
        # copy, don't re-use
        self.properties = {k: v for k, v in kwargs.items()}

    def __contains__(self, name):
        return name in self.properties

    def __getitem__(self, name):
        return self.properties[name]

    def __setitem__(self, name, value):
        self.properties[name] = value

    def __dict__(self):
        return {k: v for k, v in self.properties.items()}

    def keys(self):
        return self.properties.keys()


class PropertyDelegator(PropertyManager):
    def __init__(self, pm: PropertyManager):
        self.pm = pm

    def __getitem__(self, item):
        return self.pm.__getitem__(item)

    def __setitem__(self, key, value):
        return self.pm.__setitem__(key, value)

    def __contains__(self, item):
        return self.pm.__contains__(item)

    def __dict__(self):
        return self.pm.__dict__()

    def keys(self):
        return self.pm.keys()


class PropertyValidationError(PropertyError):
    def __init__(self, key, value):
        super().__init__('Invalid value for property "{key}": "{value}"'.format(key=key, value=str(value)))
        self.key = key
        self.value = value


class PropertyValidator(PropertyDelegator):
    """
    validates every write against the validator registered for its key; keys without a validator pass
    """

    def __init__(self, pm: PropertyManager, validators=None):
        super().__init__(pm)
        if validators is None:
            self.validators = {}
        else:
            self.validators = {k: Validator.of(v) for k, v in validators.items()}
        for key in pm.keys():
            self.validate(key, pm[key])

    def validate(self, key, value):
        if key not in self.validators:
            return
        if not self.validators[key].isValid(value):
            raise PropertyValidationError(key, value)

    def __setitem__(self, key, value):
        self.validate(key, value)
        return self.pm.__setitem__(key, value)


class PropertyWriteError(PropertyError):
    def __init__(self, key):
        super().__init__('Key "{key}" is not writeable'.format(key=key))


class PropertyReadOnly(PropertyDelegator):
    def __setitem__(self, key, value):
        raise PropertyWriteError(key)


class PropertyStack(PropertyManager):
    """
    lookup over prioritized layers; priority 0 is the highest
    """

    def __init__(self):
        self.layers = []

    def addLayer(self, priority: int, pm: PropertyManager):
        self.layers.append({"priority": priority, "props": pm})
        self.layers.sort(key=lambda la: la["priority"])

    def _layerOf(self, item):
        for layer in self.layers:
            if item in layer["props"]:
                return layer["props"]
        return None

    def sourceOf(self, item):
        for layer in self.layers:
            if item in layer["props"]:
                return layer["priority"]
        return None

    def __getitem__(self, item):
        layer = self._layerOf(item)
        if layer is None:
            raise KeyError(item)
        return layer.__getitem__(item)

    def __setitem__(self, key, value):
        if not self.layers:
            raise PropertyWriteError(key)
        return self.layers[0]["props"].__setitem__(key, value)

    def __contains__(self, item):
        return any(item in layer["props"] for layer in self.layers)

    def __dict__(self):
        return {k: self.__getitem__(k) for k in self.keys()}

    def keys(self):
        return set([key for la in self.layers for key in la["props"].keys()])
