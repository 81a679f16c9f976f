"""
Exception hierarchy shared by the library modules and the CLI.

The command group maps these onto exit codes in register_error_handlers:
argument/shape problems exit with 2, everything else with 1.
"""


class BiClstmError(Exception):
    """Base class for every error raised by this package"""


class ArgumentError(BiClstmError, ValueError):
    """An argument violates an operation's precondition"""


class ShapeError(BiClstmError, ValueError):
    """Tensor shapes are inconsistent with each other or with a config"""

    def __init__(self, message, *shapes):
        self.shapes = tuple(tuple(s) for s in shapes)
        if shapes:
            message = f"{message} (shapes: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message)


class StaleTapeError(ArgumentError):
    """A tape is used after the parameters it was recorded against changed"""


class CubeFormatError(BiClstmError):
    """A cube or label file could not be parsed"""

    def __init__(self, message, offset, path=None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} at byte offset {offset}")


class CheckpointFormatError(CubeFormatError):
    """A checkpoint container could not be parsed"""


class DivergenceError(BiClstmError):
    """Training produced a non-finite loss or gradient"""

    def __init__(self, message, batch_index, parameter_norm):
        self.batch_index = batch_index
        self.parameter_norm = parameter_norm
        super().__init__(f"{message} (batch {batch_index}, parameter norm {parameter_norm:.6g})")
