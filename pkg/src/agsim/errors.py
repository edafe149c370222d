"""Exception types shared across the simulator."""


class AgsimError(Exception):
    """Base class for all simulator errors."""


class ParseError(AgsimError):
    """Input text is not valid JSON."""


class SchemaError(AgsimError):
    """Input parsed but a field is missing, unknown, or of the wrong type."""


class ValidationError(AgsimError):
    """Structurally valid input violates an invariant (names the offender)."""


class OutOfBounds(AgsimError):
    """Query point lies outside the scene bounds."""


class TypeMismatch(AgsimError):
    """Operation applied to the wrong vehicle type."""


class DuplicateId(AgsimError):
    """Vehicle id already registered."""


class UnknownVehicle(AgsimError):
    """Vehicle id not registered."""


class NoSuchSensor(AgsimError):
    """Vehicle has no sensor of the requested kind."""


class DegenerateInput(AgsimError):
    """Too few or rank-deficient points for a rigid fit."""


class InsufficientCorrespondences(AgsimError):
    """ICP found fewer pairs than the configured minimum."""


class NoPairs(AgsimError):
    """No correspondences within the distance gate."""


class NoPath(AgsimError):
    """Goal unreachable on the grid."""


class InvalidCell(AgsimError):
    """Start or goal cell out of bounds or occupied."""


class PathExhausted(AgsimError):
    """Pure pursuit invoked with an empty path."""


class EmptyLog(AgsimError):
    """Trajectory statistics need at least one sample."""


class EmptySeries(AgsimError):
    """Error statistics need a nonempty series."""


class FrameTooLarge(AgsimError):
    """Declared frame length exceeds the 16 MiB bound."""


class MalformedJson(AgsimError):
    """Frame body is not a valid JSON object."""


class MissingField(AgsimError):
    """Frame JSON lacks a required envelope field or has the wrong type."""


class BindError(AgsimError):
    """RPC service could not bind its ports."""


class ConfigError(AgsimError):
    """Scenario configuration invalid; message names the offending field."""


class MissingArtifact(AgsimError):
    """Report directory lacks expected artifacts."""


class TaskError(AgsimError):
    """A task run failed to complete."""
