"""Exception hierarchy.

Every error carries the process exit code the CLI should use for it:
2 for usage/config problems, 3 for bad data, 4 for numeric failure.
"""


class TskError(Exception):
    exit_code = 1


class ConfigError(TskError):
    exit_code = 2


class InvalidConfig(ConfigError):
    pass


class DataError(TskError):
    exit_code = 3


class NumericError(TskError):
    exit_code = 4


class MissingLabelColumn(ConfigError):
    # the user named a column that is not there: a usage error, not a data error
    def __init__(self, label, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"label column {label!r} not found{where}")
        self.label = label


class EmptyFile(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, col, value, path=None):
        where = f"{path}:" if path else ""
        super().__init__(f"{where}row {row}: column {col!r} has non-numeric value {value!r}")
        self.row = row
        self.col = col


class NonBinaryLabel(DataError):
    def __init__(self, row, value, path=None):
        where = f"{path}:" if path else ""
        super().__init__(f"{where}row {row}: label {value!r} is not 0 or 1")
        self.row = row


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class SchemaMismatch(DataError):
    def __init__(self, missing):
        super().__init__("input is missing model features: " + ", ".join(missing))
        self.missing = list(missing)


class SingleClass(DataError):
    pass


class TooFewSamplesPerClass(DataError):
    pass


class TooFewPoints(DataError):
    pass


class EmptyCluster(DataError):
    pass


class TooManyValues(DataError):
    pass


class EmptyRowSet(DataError):
    pass


class EmptyBatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyList(DataError):
    pass


class RowOutOfRange(DataError):
    pass


class InvalidBins(ConfigError):
    pass


class InvalidRange(ConfigError):
    pass


class UnsupportedFormatVersion(DataError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
