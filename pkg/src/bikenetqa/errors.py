class BikeNetQAError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(BikeNetQAError):
    exit_code = 1


class InputError(BikeNetQAError):
    """An input file could not be read or parsed."""

    exit_code = 2


class OutputError(BikeNetQAError):
    exit_code = 3


class GridMismatchError(BikeNetQAError):
    exit_code = 4


class TagAnalysisError(BikeNetQAError):
    exit_code = 1
