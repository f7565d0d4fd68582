"""Exception hierarchy.

Every error carries a stable ``exit_code`` used by the command line front
end, so scripts can branch on the failure class.
"""


class AchordsError(Exception):
    exit_code = 1


class InvalidInput(AchordsError, ValueError):
    exit_code = 10


class DimensionMismatch(AchordsError, ValueError):
    exit_code = 11


class RankTooLarge(AchordsError, ValueError):
    exit_code = 12


class RankDeficient(AchordsError, ValueError):
    exit_code = 13


class EmptySet(AchordsError, ValueError):
    exit_code = 14


class InsufficientClassData(AchordsError, ValueError):
    exit_code = 20


class WinnerUnavailable(AchordsError, ValueError):
    exit_code = 21


class DegenerateMargin(AchordsError, ArithmeticError):
    exit_code = 22


class ParseError(AchordsError, ValueError):
    exit_code = 30


class UnsupportedVersion(AchordsError, ValueError):
    exit_code = 31


class SetTooSmall(AchordsError, ValueError):
    exit_code = 32


class ConfigError(AchordsError, ValueError):
    exit_code = 40
