"""Exception hierarchy.

``DataError`` covers bad or inconsistent user input (the CLI maps it to exit
code 2); ``InvariantViolation`` marks an internal contract failure (exit 3).
"""


class QEError(Exception):
    """Base class for all package errors."""


class DataError(QEError, ValueError):
    pass


class InvariantViolation(QEError, AssertionError):
    pass


class LineCountMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingColumn(DataError):
    pass


class MissingPostEdit(DataError):
    def __init__(self, record_id):
        self.record_id = record_id
        super().__init__(f"record {record_id} has no post-edit")


class NoLabels(DataError):
    pass


class NoCandidate(DataError):
    pass


class SettingMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class ConstantInput(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class FoldTooSmall(DataError):
    pass


class NotFitted(QEError, RuntimeError):
    pass


class NoRelevantPairs(DataError):
    pass


class TargetLangMismatch(DataError):
    pass


class ClientFailure(QEError, RuntimeError):
    def __init__(self, record_id, cause):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"translation failed for record {record_id}: {cause}")


class CheckpointError(DataError):
    pass


class ConfigError(DataError):
    pass
