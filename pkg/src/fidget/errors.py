"""Exception hierarchy. Every error carries a stable class name used by the CLI."""


class FidgetError(Exception):
    """Base class for all pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidTopology(FidgetError):
    pass


class DegenerateScale(FidgetError):
    pass


class TooShort(FidgetError):
    pass


class EmptyDataset(FidgetError):
    pass


class SingleClass(FidgetError):
    pass


class DimensionMismatch(FidgetError):
    pass


class TooFewSubjects(FidgetError):
    pass


class EmptyInput(FidgetError):
    pass


class MissingPart(FidgetError):
    pass


class EmptyMask(FidgetError):
    pass


class InvalidProfile(FidgetError):
    pass


class ParseError(FidgetError):
    pass


class SchemaError(FidgetError):
    pass


class JointMismatch(FidgetError):
    pass


class ConfigError(FidgetError):
    pass
