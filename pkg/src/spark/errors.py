"""Exception hierarchy shared by every module.

Exit-code mapping used by the CLI:
  1 -> ConfigError / InvalidInputError (usage)
  2 -> IngestionError / CorruptStoreError / NotFoundError (IO)
  3 -> NumericError (NaN/Inf loss)
"""


class SparkError(Exception):
    pass


class InvalidInputError(SparkError):
    pass


class ConfigError(SparkError):
    pass


class NotFoundError(SparkError):
    pass


class EmptyStoreError(SparkError):
    pass


class CorruptStoreError(SparkError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IngestionError(SparkError):
    pass


class NumericError(SparkError):
    pass


class TapeReusedError(SparkError):
    pass
