"""Exception hierarchy.

Validation errors (bad shapes, malformed files, out-of-range data) map to CLI
exit status 1; numerical failures (rank loss, singular systems) map to 2.
"""


class ClsError(Exception):
    exit_code = 1


class ValidationError(ClsError, ValueError):
    exit_code = 1


class DimensionError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class NameMismatchError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class ZeroWhiteError(ValidationError):
    pass


class LeftInverseError(ValidationError):
    pass


class NumericalError(ClsError, ArithmeticError):
    exit_code = 2


class NotPositiveDefiniteError(NumericalError):
    pass


class RankError(NumericalError):
    pass


class SingularFisherError(RankError):
    pass


class SingularConstraintError(RankError):
    pass


class SingularSystemError(NumericalError):
    pass
