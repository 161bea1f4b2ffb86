"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input or a violated data-contract precondition."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
