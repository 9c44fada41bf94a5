"""Exception types shared across the package."""


class XtalmetError(Exception):
    """Base class for all package-specific errors."""


class InputError(XtalmetError):
    """Bad user input: malformed files, invalid records, unusable arguments.

    The command-line interface maps these to exit code 2.
    """


class ParseError(InputError):
    """A structure file could not be parsed."""


class CacheMismatchError(InputError):
    """An embedding cache does not correspond to the sample set it is used with."""
