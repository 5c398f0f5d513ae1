"""Exception hierarchy shared by every mechlab module.

Each class carries the CLI exit code it maps to, so the front end never
has to know which layer raised.
"""


class MechlabError(Exception):
    exit_code = 4


class ParseError(MechlabError):
    """Instance text is not valid JSON or has the wrong shape."""

    exit_code = 3

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ValidationError(MechlabError):
    """A structural invariant of an instance or parameter is violated."""

    exit_code = 3

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SupportTooLarge(MechlabError):
    exit_code = 3


class StateSpaceTooLarge(MechlabError):
    exit_code = 3


class LpTooLarge(MechlabError):
    exit_code = 3


class DegenerateSupport(MechlabError):
    exit_code = 3


class NonPositiveScale(MechlabError):
    exit_code = 3


class ZeroProbabilityContext(MechlabError):
    exit_code = 4


class LpNumericalFailure(MechlabError):
    exit_code = 4


class NoPriceAboveThreshold(MechlabError):
    exit_code = 4
