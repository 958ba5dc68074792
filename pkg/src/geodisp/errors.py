class GeodispError(Exception):
    """Base class for all toolkit errors."""


class InputError(GeodispError):
    """Bad user input: files, configs, records. Maps to exit code 1."""


class GeometryError(InputError):
    pass


class IngestError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class GeoError(InputError):
    pass


class ConfigError(InputError):
    pass


class MetricError(GeodispError):
    pass


class SynthError(InputError):
    pass


class InvariantViolation(GeodispError):
    """An internal consistency check failed. Maps to exit code 2."""
