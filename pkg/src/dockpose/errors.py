"""Exception hierarchy. The CLI maps these onto exit codes."""


class DockposeError(Exception):
    """Base for all pipeline errors."""


class FitError(DockposeError):
    """A processing stage could not produce a valid model."""


class CloudFormatError(DockposeError):
    """A cloud file could not be parsed or written."""


class ConfigError(DockposeError):
    """Invalid configuration or scene specification."""
