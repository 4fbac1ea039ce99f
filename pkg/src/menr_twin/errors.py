"""Exception hierarchy shared by every layer of the twin."""


class MENRError(Exception):
    """Base class for all errors raised by menr_twin."""


class InvalidParameterError(MENRError, ValueError):
    pass


class UnsupportedConfigurationError(MENRError, ValueError):
    pass


class InsensitiveConfigurationError(MENRError, ZeroDivisionError):
    """The rod configuration cancels, so no field information can be recovered."""


class InsufficientDataError(MENRError, ValueError):
    pass


class DegenerateDiscriminantError(MENRError, ValueError):
    pass


class CalibrationError(MENRError, RuntimeError):
    pass


class SingularFitError(MENRError, ValueError):
    pass


class CampaignError(MENRError, RuntimeError):
    pass


class ConfigError(MENRError, ValueError):
    """Invalid configuration file. ``line`` is 1-based when it could be located."""

    def __init__(self, message, *, section=None, key=None, line=None):
        self.section = section
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
