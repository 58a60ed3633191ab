"""Exception hierarchy shared across the package."""


class RimDiagError(Exception):
    pass


class ConfigError(RimDiagError):
    """A process-description document could not be turned into a model."""


class SchemaError(ConfigError):
    pass


class DanglingReferenceError(ConfigError):
    """A mapping points at a transition, tool or sensor that does not exist."""


class OrderError(ConfigError):
    """Station indices are not the permutation 1..n in ascending order."""


class UnknownStep(RimDiagError, KeyError):
    pass


class UnknownSensor(RimDiagError, KeyError):
    pass


class UnknownSensorInTrace(RimDiagError):
    def __init__(self, sensor):
        super().__init__(f"trace references sensor {sensor!r} unknown to the process description")
        self.sensor = sensor


class NotUnsat(RimDiagError):
    pass


class TraceIncomplete(RimDiagError):
    pass


class InvalidFault(RimDiagError, ValueError):
    pass


class MalformedLog(RimDiagError):
    pass
