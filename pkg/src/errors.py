"""
Exception types shared across the package.

Anything derived from InputError is the caller's fault (bad file, bad scenario,
instance too large) and maps to exit status 2 on the command line.
"""


class RestorationError(Exception):
    """
    Base class for every error raised by this package.
    """


class InputError(RestorationError, ValueError):
    """
    Malformed or inconsistent input.
    """


class NetworkFormatError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DemandFormatError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScenarioError(InputError):
    """
    One or more scenario invariants are violated. All violations are kept in
    `errors`, not just the first.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ValidationError(InputError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class InstanceTooLargeError(InputError):
    pass


class AssignmentError(RestorationError):
    pass


class UnreachableDemandError(AssignmentError):
    def __init__(self, origin: int, destination: int):
        self.origin = origin
        self.destination = destination
        super().__init__(f"OD ({origin},{destination}) unreachable")


class ObjectiveError(RestorationError, ValueError):
    pass


class CqmError(RestorationError):
    pass


class CqmConnectionError(CqmError):
    pass


class CqmAuthenticationError(CqmError):
    pass


class CqmInfeasibleError(CqmError):
    pass


class CqmTimeoutError(CqmError):
    pass


class CqmServiceError(CqmError):
    pass
