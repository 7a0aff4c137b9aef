"""Exception hierarchy.

Every error raised deliberately by the library derives from ``TSGuardError``
and, where a builtin category fits, from that builtin as well so callers can
catch ``ValueError`` or ``IndexError`` without importing this module.
"""


class TSGuardError(Exception):
    pass


# core
class EmptyIntersection(TSGuardError, ValueError):
    pass


class OutOfBounds(TSGuardError, IndexError):
    pass


class EmptySeries(TSGuardError, ValueError):
    pass


class MisalignedInputs(TSGuardError, ValueError):
    pass


class ShapeMismatch(TSGuardError, ValueError):
    pass


# preprocessing / estimation
class SeriesTooShort(TSGuardError, ValueError):
    pass


class WindowTooLarge(TSGuardError, ValueError):
    pass


class NonConvergence(TSGuardError, RuntimeError):
    pass


class InvalidParams(TSGuardError, ValueError):
    pass


class SingularRegression(TSGuardError, ValueError):
    pass


class ZeroVariance(TSGuardError, ValueError):
    pass


class BandInfeasible(TSGuardError, ValueError):
    pass


# selection / rca / evaluation
class NoPositiveLabels(TSGuardError, ValueError):
    pass


class NoCandidateAnomalies(TSGuardError, ValueError):
    pass


class NoCandidates(TSGuardError, ValueError):
    pass


class DegenerateLabels(TSGuardError, ValueError):
    pass


# orchestration
class ConfigError(TSGuardError, ValueError):
    """Invalid pipeline configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(ConfigError):
    pass


class UnknownDetector(ConfigError):
    pass


class StageOrderViolation(ConfigError):
    pass


class AlertWithoutDetect(ConfigError):
    pass


class UnreadableFile(TSGuardError, OSError):
    pass


class SchemaMismatch(TSGuardError, ValueError):
    pass


class DuplicateTimestamp(TSGuardError, ValueError):
    pass


class OutOfOrderRecord(TSGuardError, ValueError):
    pass


class SinkUnavailable(TSGuardError, OSError):
    pass
