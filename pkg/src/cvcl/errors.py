class CvclError(Exception):
    pass


class ConfigurationError(CvclError, ValueError):
    """Invalid sizes, settings or flags."""


class UsageError(CvclError, ValueError):
    """An operation called with inconsistent inputs or in the wrong order."""


class NonFiniteError(CvclError, FloatingPointError):
    """A loss or gradient became NaN or infinite."""


class DatasetFormatError(CvclError, ValueError):
    """A dataset directory is missing files or has malformed contents."""


class RowCountMismatchError(DatasetFormatError):
    pass


class LabelMismatchError(DatasetFormatError):
    """Declared cluster count disagrees with the labels."""


class MalformedNumericError(DatasetFormatError):
    pass


class GenerationError(CvclError, RuntimeError):
    """Synthetic centers could not be placed with the requested separation."""


class CheckpointError(CvclError, ValueError):
    pass
