"""Exception hierarchy shared by all modules."""


class EmocondError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EmocondError, ValueError):
    """Invalid configuration. The CLI maps this to exit code 2."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


class NumericalError(EmocondError, ArithmeticError):
    """Runtime numerical failure. The CLI maps this to exit code 1."""


class DimensionError(EmocondError, ValueError):
    pass


class ContractError(EmocondError, ValueError):
    pass


class InvalidMaskError(EmocondError, ValueError):
    pass


class VocabError(EmocondError, IndexError):
    pass


class EmptyBatchError(EmocondError, ValueError):
    pass


class InsufficientBatchError(EmocondError, ValueError):
    pass


class DegeneratePairError(EmocondError, ArithmeticError):
    pass


class InsufficientPairsError(EmocondError, ValueError):
    def __init__(self, message, usable):
        super().__init__(message)
        self.usable = usable


class SplitError(EmocondError, ValueError):
    def __init__(self, message, stratum):
        super().__init__(message)
        self.stratum = stratum


class DivergenceError(NumericalError):
    def __init__(self, message, step, last_finite=None):
        super().__init__(message)
        self.step = step
        self.last_finite = last_finite or {}


class OracleUnavailableError(EmocondError, LookupError):
    pass


class FormatError(EmocondError, ValueError):
    """Malformed TNSR file or corpus directory."""
