"""Exception hierarchy shared across the package."""


class NetReconError(Exception):
    """Base class for all errors raised by netrecon."""


class ParseError(NetReconError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SelfLoopError(ParseError):
    pass


class ValidationError(NetReconError, ValueError):
    pass


class ConflictError(ValidationError):
    pass


class ContractError(NetReconError, ValueError):
    """Input data does not match what the requested model expects."""


class DegeneratePosteriorError(NetReconError, ArithmeticError):
    def __init__(self, rate):
        self.rate = rate
        super().__init__(f"degenerate posterior: zero denominator while updating {rate}")


class NumericalError(NetReconError, ArithmeticError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class UnsupportedError(NetReconError):
    pass


class GofError(NetReconError, ValueError):
    pass
