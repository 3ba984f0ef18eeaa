"""Exception hierarchy shared across the package."""


class WCapsuleError(Exception):
    """Base class for every error raised by this package."""


class ContractError(WCapsuleError, ValueError):
    """A precondition of an operation was violated."""


# corpus io
class ParseError(WCapsuleError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(ParseError):
    pass


class EmptyDatasetError(WCapsuleError, ValueError):
    pass


class StratificationError(WCapsuleError, ValueError):
    pass


class SpecError(WCapsuleError, ValueError):
    pass


# text pipeline
class PipelineError(WCapsuleError, ValueError):
    pass


class DimensionError(PipelineError):
    pass


class BoundsError(WCapsuleError, IndexError):
    pass


# autodiff
class ShapeError(WCapsuleError, ValueError):
    pass


class BindingError(WCapsuleError, KeyError):
    pass


class StateError(WCapsuleError, RuntimeError):
    pass


class NonFiniteError(WCapsuleError, ValueError):
    pass


# dbd / training / persistence
class StatsError(WCapsuleError, ValueError):
    pass


class TrainingError(WCapsuleError, ValueError):
    pass


class VersionError(WCapsuleError, ValueError):
    pass


class IntegrityError(WCapsuleError, ValueError):
    pass
