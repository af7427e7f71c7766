from __future__ import annotations


class SoficDimError(ValueError):
    pass


class PreconditionError(SoficDimError):
    pass


class DimensionMismatchError(SoficDimError):
    pass


class ResourceLimitError(SoficDimError):
    pass


class NotHermitianError(SoficDimError):
    pass


class IllConditionedError(SoficDimError):
    pass


class ConvergenceError(SoficDimError):
    pass


class ManifestError(SoficDimError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
