"""Exception hierarchy.

Everything a user can trigger with bad input derives from :class:`InputError`;
the CLI maps that family to its own exit code.
"""


class GridstormError(Exception):
    """Base class for all package errors."""


class InputError(GridstormError, ValueError):
    """Bad input data or arguments."""


class MalformedFile(InputError):
    pass


class MalformedRow(MalformedFile):
    def __init__(self, line, reason=""):
        self.line = line
        super().__init__(f"line {line}: {reason}" if reason else f"line {line}")


class NonMonotonicTime(MalformedFile):
    def __init__(self, line):
        self.line = line
        super().__init__(f"line {line}: timestamp not strictly increasing")


class EmptyTrack(MalformedFile):
    pass


class NonPositiveDt(InputError):
    pass


class OutOfBounds(InputError):
    pass


class DuplicateFeederId(MalformedFile):
    def __init__(self, feeder_id):
        self.feeder_id = feeder_id
        super().__init__(f"duplicate feeder id {feeder_id!r}")


class UnknownRegion(MalformedFile):
    def __init__(self, feeder_id, region=None):
        self.feeder_id = feeder_id
        super().__init__(f"feeder {feeder_id!r} references unknown region {region!r}")


class EmptyPoles(MalformedFile):
    def __init__(self, feeder_id):
        self.feeder_id = feeder_id
        super().__init__(f"feeder {feeder_id!r} has no poles")


class NonPositiveBeta(InputError):
    def __init__(self, region):
        self.region = region
        super().__init__(f"region {region!r}: beta must be > 0")


class MissingRegion(InputError):
    def __init__(self, region):
        self.region = region
        super().__init__(f"no fragility parameters for region {region!r}")


class DegenerateUniform(InputError):
    pass


class CoverageGap(InputError):
    pass


class TimestampMismatch(InputError):
    pass


class InsufficientPoints(InputError):
    pass


class DegenerateData(InputError):
    pass
