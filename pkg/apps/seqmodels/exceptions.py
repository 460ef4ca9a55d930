"""
Sequence model exceptions.
"""


class ModelError(ValueError):
    """Base class for model construction, forward and checkpoint errors."""


class EmptyResponse(ModelError):
    def __init__(self):
        super().__init__("EmptyResponse: the response must contain at least one token")


class VocabMismatch(ModelError):
    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(f"VocabMismatch: checkpoint vocab {found[:12]} != expected {expected[:12]}")


class CheckpointFormatError(ModelError):
    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"CheckpointFormatError({path}): {reason}")


class SharedParameters(ModelError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"SharedParameters: {', '.join(self.names[:5])}")
