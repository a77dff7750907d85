"""Exception types; the CLI maps ValidationError to exit 1 and NumericError to exit 2."""


class ValidationError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


class ResourceError(RuntimeError):
    pass
