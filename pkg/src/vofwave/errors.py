class NumericalFailure(RuntimeError):
    """A solve or iteration did not converge."""


class DiagnosticFailure(NumericalFailure):
    """A runtime check on the discrete weights or energies was violated."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where
