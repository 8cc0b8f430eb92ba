"""Exception hierarchy shared across the package."""


class LumenopsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LumenopsError):
    """Configuration text could not be parsed or failed schema validation."""


class TopologyError(LumenopsError):
    """Invalid plant description, grid position, or path."""


class ServiceError(LumenopsError):
    """Service validation failure, slice collision, or channel mismatch."""


class CommandError(LumenopsError):
    """An NMS command was rejected; the target state is unchanged."""


class PermissionDeniedError(LumenopsError):
    """Pool access attempted by a role without the required permission."""


class TransitionError(LumenopsError):
    """Illegal pool entry status transition."""


class CalibrationError(LumenopsError):
    """Calibration cannot run, e.g. empty telemetry batch."""


class PlanError(LumenopsError):
    """Routing or spectrum planning failed (no path, exhausted spectrum)."""


class UnrecognizedIntent(LumenopsError):
    """A task target matched no workflow template."""


class FactualityError(LumenopsError):
    """A report claim cites a pool entry that does not back its value."""
