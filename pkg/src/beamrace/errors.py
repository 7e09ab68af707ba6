"""Exception types shared across the package."""


class BeamraceError(Exception):
    """Base class for all package errors."""


class ConfigError(BeamraceError):
    """A configuration file, preset or override could not be understood."""


class ValidationError(BeamraceError, ValueError):
    """Parameters parsed fine but violate a model invariant."""


class MissingRowError(BeamraceError):
    """A compositor slice referenced a camera row that is not in the buffer.

    This indicates a buffering bug, not tearing: tearing means the row is
    present but holds the wrong frame.
    """

    def __init__(self, row, available):
        self.row = int(row)
        self.available = available
        super().__init__(f"camera row {self.row} not buffered (have rows {available[0]}..{available[1] - 1})")
