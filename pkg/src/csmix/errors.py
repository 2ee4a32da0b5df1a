"""Shared exception types."""


class ValidationError(ValueError):
    """Malformed or inconsistent input data (manifest, alignment, CTM, hyp file).

    Carries an optional source location so batch tools can point at the
    offending line.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line
