"""Exception types shared across the package."""


class WrinkleforgeError(Exception):
    """Base class for every package-specific error."""


# ---- file and image I/O ----

class MissingFileError(WrinkleforgeError, FileNotFoundError):
    pass


class UnsupportedFormatError(WrinkleforgeError, ValueError):
    """File is readable but outside the supported PNG contract."""


class CorruptDataError(WrinkleforgeError, ValueError):
    """File claims a supported format but its contents are broken."""


class IoFailureError(WrinkleforgeError, OSError):
    pass


# ---- shape and value contracts ----

class WrongChannelCountError(WrinkleforgeError, ValueError):
    pass


class ShapeMismatchError(WrinkleforgeError, ValueError):
    pass


class InvalidKernelSpecError(WrinkleforgeError, ValueError):
    pass


class InvalidThresholdError(WrinkleforgeError, ValueError):
    pass


class DegenerateInputError(WrinkleforgeError, ValueError):
    """Input is valid in shape but makes the requested statistic undefined."""


class NotNormalizedError(WrinkleforgeError, ValueError):
    pass


class NonFiniteInputError(WrinkleforgeError, ValueError):
    pass


# ---- model and checkpoints ----

class InvalidSpecError(WrinkleforgeError, ValueError):
    pass


class IndivisibleSpatialDimsError(WrinkleforgeError, ValueError):
    pass


class NoForwardPassError(WrinkleforgeError, RuntimeError):
    pass


class ShrinkNotSupportedError(WrinkleforgeError, ValueError):
    pass


class CorruptCheckpointError(WrinkleforgeError, ValueError):
    pass


class HashMismatchError(WrinkleforgeError, ValueError):
    pass


class IncompatibleCheckpointError(WrinkleforgeError, ValueError):
    pass


# ---- datasets and training ----

class EmptyDatasetError(WrinkleforgeError, ValueError):
    pass


class TooFewSamplesError(WrinkleforgeError, ValueError):
    pass


class DatasetMissingError(WrinkleforgeError, FileNotFoundError):
    pass
