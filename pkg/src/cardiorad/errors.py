"""Exception hierarchy shared across the package."""


class CardioradError(Exception):
    """Base class; the CLI turns these into a structured error report."""

    def context(self) -> dict:
        return {}


class ManifestError(CardioradError):
    def __init__(self, message, subject=None, field=None):
        super().__init__(message)
        self.subject = subject
        self.field = field

    def context(self):
        return {k: v for k, v in (("subject", self.subject), ("field", self.field)) if v is not None}


class VolumeFormatError(CardioradError):
    pass


class EmptyRegionError(CardioradError):
    pass


class ExtractionError(CardioradError):
    def __init__(self, message, subject=None, phase=None, structure=None):
        super().__init__(message)
        self.subject = subject
        self.phase = phase
        self.structure = structure

    def context(self):
        pairs = (("subject", self.subject), ("phase", self.phase), ("structure", self.structure))
        return {k: v for k, v in pairs if v is not None}


class TableFormatError(CardioradError):
    pass


class ConvergenceError(CardioradError):
    def __init__(self, message, violations=0):
        super().__init__(message)
        self.violations = violations

    def context(self):
        return {"kkt_violations": self.violations}


class ModelFormatError(CardioradError):
    pass


class EvaluationError(CardioradError):
    pass
