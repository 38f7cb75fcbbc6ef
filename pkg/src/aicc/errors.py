"""Exception types shared across the package."""


class AiccError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AiccError, ValueError):
    pass


class DegenerateInputError(AiccError, ValueError):
    """An oracle was asked for a quantity that is not uniquely defined."""


class InsufficientResultsError(AiccError):
    """Fewer worker results than the recovery threshold."""

    def __init__(self, needed, got, transcript=None):
        self.needed = needed
        self.got = got
        self.missing = needed - got
        self.transcript = transcript
        super().__init__(
            f"need {needed} worker results to decode, got {got} ({self.missing} missing)"
        )


class InvalidNodesError(AiccError, ValueError):
    """Evaluation or anchor nodes are not pairwise distinct."""


class TrainingDivergedError(AiccError, FloatingPointError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class CheckpointError(AiccError, ValueError):
    pass
