"""Exception hierarchy. Each error carries the process exit code the CLI maps it to."""


class SemFuseError(Exception):
    exit_code = 1


class DegenerateDistribution(SemFuseError, ValueError):
    exit_code = 10


class InvalidConfig(SemFuseError, ValueError):
    exit_code = 2


class OutputError(SemFuseError, OSError):
    exit_code = 3


class MalformedFrame(SemFuseError, ValueError):
    exit_code = 4

    def __init__(self, message, frame_id=None):
        if frame_id is not None:
            message = f"frame {frame_id}: {message}"
        super().__init__(message)
        self.frame_id = frame_id


class OrderViolation(SemFuseError, ValueError):
    exit_code = 5


class LabelSetMismatch(SemFuseError, ValueError):
    exit_code = 6


class EmptyGroundTruth(SemFuseError, ValueError):
    exit_code = 7


class InvalidScene(SemFuseError, ValueError):
    exit_code = 8


class MalformedFile(SemFuseError, ValueError):
    exit_code = 9
