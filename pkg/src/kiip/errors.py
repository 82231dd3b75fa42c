"""Exception hierarchy shared across the package."""


class KiipError(Exception):
    pass


class LengthMismatch(KiipError, ValueError):
    pass


class DimensionMismatch(KiipError, ValueError):
    pass


class WrongFrame(KiipError, ValueError):
    pass


class OutOfBounds(KiipError, ValueError):
    pass


class ShapeMismatch(KiipError, ValueError):
    pass


class EmptyClass(KiipError, ValueError):
    pass


class EmptyTrainingSet(KiipError, ValueError):
    pass


class DivergedLoss(KiipError, FloatingPointError):
    pass


class FormatError(KiipError, ValueError):
    """Malformed file contents. Carries a position so the caller can point at it."""

    def __init__(self, message, *, line=None, offset=None, path=None):
        self.line = line
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class BadHeader(FormatError):
    pass


class CountMismatch(FormatError):
    pass


class IndexOutOfRange(FormatError):
    pass
